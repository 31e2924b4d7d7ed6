import sys

from bobw_lab.presentation.cli import main

sys.exit(main())
