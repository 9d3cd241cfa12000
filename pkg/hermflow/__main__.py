import sys

from hermflow.cli import main

sys.exit(main())
