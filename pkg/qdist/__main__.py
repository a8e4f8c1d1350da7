"""Entry point for ``python -m qdist``."""

import sys

from .cli import main

sys.exit(main())
