#!/usr/bin/env python3
"""
Run the latent-risk command line from a source checkout.

    python main.py assess scenarios/cache_db.json
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
