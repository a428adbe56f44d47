import os

SEED = os.environ.get("DIRIMULT_SEED", None)
PRIOR_FAMILY = os.environ.get("DIRIMULT_PRIOR", None)
CLASS_PRIOR_SOURCE = os.environ.get("DIRIMULT_CLASS_PRIOR", None)
WORKERS = os.environ.get("DIRIMULT_WORKERS", None)
