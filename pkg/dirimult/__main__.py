import sys

from dirimult.cli import main

sys.exit(main())
