"""
Main entry point - builds and compares Lindblad master equations.

See `python evaluate.py --help` for the run, compare, ensemble, spectra and
build commands.
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
