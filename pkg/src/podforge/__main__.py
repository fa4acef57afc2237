import sys

from podforge.cli import main

sys.exit(main())
