import sys

from dmdsc.cli import main

sys.exit(main())
