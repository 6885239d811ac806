import sys

from dataloc.cli import main

sys.exit(main())
