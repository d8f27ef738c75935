import sys

from aavit.cli import main

sys.exit(main())
