import sys

from cvamp.cli import main

sys.exit(main())
