"""Entry point for ``python -m litmine``."""

import sys

from litmine.pipeline.cli import main

if __name__ == "__main__":
    sys.exit(main())
