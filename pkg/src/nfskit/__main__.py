import sys

from nfskit.cli import main

sys.exit(main())
