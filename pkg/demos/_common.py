"""Shared helpers for the demo scripts."""

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")


def output_dir() -> Path:
    out = Path(os.environ.get("KEEN_DEMO_OUT", Path(__file__).with_name("output")))
    out.mkdir(parents=True, exist_ok=True)
    return out
