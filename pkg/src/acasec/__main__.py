import sys

from acasec.cli import main

sys.exit(main())
