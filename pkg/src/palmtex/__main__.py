import sys

from palmtex.cli import main

sys.exit(main())
