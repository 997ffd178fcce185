import sys

from lim.cli import main

sys.exit(main())
