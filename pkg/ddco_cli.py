#!/usr/bin/env python3
"""
DDCO command line entry point

Usage:
    python ddco_cli.py gen-demos --env slds --n 100 --out slds.jsonl
    python ddco_cli.py train-ddco --data slds.jsonl --k 2 --out model.json
    python ddco_cli.py -v check-deps
"""

import sys

from ddco.cli import main

if __name__ == "__main__":
    sys.exit(main())
