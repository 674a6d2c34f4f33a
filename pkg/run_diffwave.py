#!/usr/bin/env python3
"""
Run a diffwave subcommand from a source checkout.

Usage:
    python run_diffwave.py check --config experiments/default-wave.conf
    python run_diffwave.py run --config experiments/default-wave.conf
    python run_diffwave.py fit --out runs/default
"""

import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from diffwave.cli import main

if __name__ == "__main__":
    sys.exit(main())
