import sys

from orbopt.cli import main

sys.exit(main())
