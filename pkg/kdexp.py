#!/usr/bin/env python3
"""
Entry point for the KDEXP command line
"""

import os
import sys


def main() -> int:
    """Main entry point for the command line"""
    # Add the root directory to the path
    root_dir = os.path.dirname(os.path.abspath(__file__))
    sys.path.insert(0, root_dir)

    from packages.cli.main import main as cli_main

    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
