#!/usr/bin/env python3
"""
Command-line entrypoint for the reducibility toolkit.

Runs one stage of the pipeline, or all of them, on a Fourier field:
- bryuno: Bryuno sequence and scale constants
- solve: formal series for the conjugation and the counterterm
- trees: tree expansion checked against the series
- renorm: renormalized self-energy table and its identities
- verify: numerical integration against the truncated series
- scan: lambda0 grid scan and excluded measure

Usage:
    python run.py all
    python run.py solve --lambda0 0.8 --K 3
    python run.py scan --config data/golden.conf --jobs 4

Environment Variables:
    QPREDUCE_OUTPUT_DIR: default output directory (default: results)
"""

import sys
from pathlib import Path

# Add the current directory to Python path
sys.path.append(str(Path(__file__).parent))

from qpreduce.cli import main


if __name__ == "__main__":
    main()
