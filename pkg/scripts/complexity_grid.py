#!/usr/bin/env python3
"""Measure the communication grids and write the envelope-fit report.

Equivalent to `codedbft complexity --protocol all --out complexity_report.json`
with the default grids; kept as a script so the experiment is one command.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from codedbft.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "complexity_report.json"
    sys.exit(main(["complexity", "--protocol", "all", "--out", out]))
