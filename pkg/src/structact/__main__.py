import sys

from .activity_cli import main

sys.exit(main())
