"""Nominal vs robust band coverage on the VAR(1) process.

Thin wrapper over ``robust-bands reproduce-table1``; every flag is passed
through, e.g.

    python scripts/reproduce_table1.py --n 100 200 500 --seed 1 --out-dir results
"""

import sys

from robust_bands.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce-table1", *sys.argv[1:]]))
