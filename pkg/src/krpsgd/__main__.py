import sys

from krpsgd.cli import main

sys.exit(main())
