import sys

from covlab.cli import main

sys.exit(main())
