#!/usr/bin/env python3
"""Run the benchmark convergence studies and write the CSV tables.

Examples:
    python scripts/run_study.py --case ex1 --order 1 --mesh-family voronoi
    python scripts/run_study.py --case ex3 --out-dir results/
"""
import sys

from lpsvem.cli import main

if __name__ == "__main__":
    sys.exit(main(["study"] + sys.argv[1:]))
