import sys

from regdialog.cli import main

sys.exit(main())
