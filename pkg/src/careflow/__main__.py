"""Allow ``python -m careflow`` as an alias for the ``careflow`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
