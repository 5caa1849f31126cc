import sys

from iterskel.cli import main

sys.exit(main())
