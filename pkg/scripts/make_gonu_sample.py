"""Regenerate the bundled 50-week, 4-channel GONU-shaped sample.

The values are synthetic (seeded geometric random walks with weekly
seasonality), sized like the gold/oil/NASDAQ/USD series.  Usage:

    python scripts/make_gonu_sample.py [OUT_CSV]
"""

import csv
import sys
from pathlib import Path

import numpy as np

CHANNELS = ("gold", "oil", "nasdaq", "usd")
START = np.array([1200.0, 55.0, 5500.0, 100.0])
DRIFT = np.array([0.001, 0.002, 0.004, -0.0005])
VOL = np.array([0.012, 0.035, 0.02, 0.006])
CYCLE = np.array([0.01, 0.04, 0.015, 0.005])


def make(n_weeks=50, seed=2017):
    rng = np.random.default_rng(seed)
    t = np.arange(n_weeks)
    steps = DRIFT + VOL * rng.standard_normal((n_weeks, len(CHANNELS)))
    steps[0] = 0.0
    season = CYCLE * np.sin(2 * np.pi * t[:, None] / 13.0 + np.arange(len(CHANNELS)))
    return t, START * np.exp(np.cumsum(steps, axis=0) + season)


def main(out):
    t, values = make()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", *CHANNELS])
        for k, row in zip(t, values):
            w.writerow([int(k), *(f"{v:.4f}" for v in row)])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parents[1] / "src/mohsm/data/gonu_sample.csv")
