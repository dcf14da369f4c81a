import sys

from zkcollide.cli import main

sys.exit(main())
