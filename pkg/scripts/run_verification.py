#!/usr/bin/env python3
"""Run every statistical verification suite and write CSV reports.

Usage: python3 scripts/run_verification.py [--out DIR] [--seed S]
Exits non-zero if any suite fails.
"""

import sys

from zobilevel.cli import main

if __name__ == "__main__":
    sys.exit(main(["verify", "all", *sys.argv[1:]]))
