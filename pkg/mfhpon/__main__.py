"""Entry point for running mfhpon as a module: python -m mfhpon"""

import sys

from mfhpon.cli import main

if __name__ == "__main__":
    sys.exit(main())
