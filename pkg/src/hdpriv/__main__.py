import sys

from hdpriv.cli import main

sys.exit(main())
