#!/usr/bin/env python3
"""Trace the Hessian-inverse-product SGD on a closed-form fixture.

Writes the iterate trajectory and its distance to the analytic target to CSV.

Usage: python3 scripts/szhia_demo.py [--gamma G] [--steps T] [--out DIR]
"""

import sys

from zobilevel.cli import main

if __name__ == "__main__":
    sys.exit(main(["szhia-demo", *sys.argv[1:]]))
