import sys

from harbench.cli import main

sys.exit(main())
