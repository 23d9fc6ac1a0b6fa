#!/usr/bin/env python3
"""Fly one reference trajectory and write telemetry; wrapper for ``quadtrack track``.

Examples:
    python3 scripts/track_once.py --reference circle --wind "0,2,0"
    python3 scripts/track_once.py --reference hover \
        --agent runs/train_desk/forecaster_quantile_seed0.npz
"""
import sys
from pathlib import Path

try:
    from quadtrack.cli import main
except ImportError:  # running from a checkout without installation
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from quadtrack.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["track", *sys.argv[1:]]))
