import sys

from gapflow.cli import main

sys.exit(main())
