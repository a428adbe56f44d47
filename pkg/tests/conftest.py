import pytest

from dirimult.classifier import explicit_class_prior, fit_model
from dirimult.conjugate import PriorFamily
from dirimult.dataset import load_fixture, parse_training_csv
from tests.golden import PERIOD_PRIOR, PERIODS


@pytest.fixture(scope="session")
def period_corpus():
    return parse_training_csv(load_fixture("period_counts.csv"), source="period_counts.csv")


@pytest.fixture(scope="session")
def period_model(period_corpus):
    return fit_model(period_corpus, PriorFamily.PERKS, explicit_class_prior(PERIOD_PRIOR, PERIODS))


@pytest.fixture(scope="session")
def synthetic_corpus():
    return parse_training_csv(load_fixture("synthetic_sites.csv"), source="synthetic_sites.csv")
