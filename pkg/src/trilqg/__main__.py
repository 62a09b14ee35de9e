import sys

from trilqg.cli import main

sys.exit(main())
