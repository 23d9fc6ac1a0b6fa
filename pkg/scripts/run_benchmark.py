#!/usr/bin/env python3
"""Compare controllers across wind scenarios; wrapper for ``quadtrack bench``.

Examples:
    python3 scripts/run_benchmark.py --seeds 5
    python3 scripts/run_benchmark.py --seeds 20 --scenario gusty_line \
        --quantile-agent runs/train_desk/forecaster_quantile_seed0.npz
"""
import sys
from pathlib import Path

try:
    from quadtrack.cli import main
except ImportError:  # running from a checkout without installation
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from quadtrack.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["bench", *sys.argv[1:]]))
