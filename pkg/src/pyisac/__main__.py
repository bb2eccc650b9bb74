"""Run the command line."""
import sys

from pyisac.cli import main

sys.exit(main())
