#!/usr/bin/env python3
"""Train a residual forecaster; wrapper for ``quadtrack train``.

Examples:
    python3 scripts/train_forecaster.py --config configs/train_desk.cfg --seed 0
    python3 scripts/train_forecaster.py --episodes 50 --mean-critic
"""
import sys
from pathlib import Path

try:
    from quadtrack.cli import main
except ImportError:  # running from a checkout without installation
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from quadtrack.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["train", *sys.argv[1:]]))
