import sys

from lolguard.cli import main

sys.exit(main())
