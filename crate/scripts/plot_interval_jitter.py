#!/usr/bin/env python3
"""Plot the interval-jitter sweep emitted by `vht-lab interval-jitter`.

Usage: plot_interval_jitter.py [out/interval_jitter.csv] [figure.png]
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "out/interval_jitter.csv"
out = sys.argv[2] if len(sys.argv) > 2 else "interval_jitter.png"

series = {}
with open(path) as f:
    for row in csv.DictReader(f):
        series.setdefault(row["clock"], []).append(
            (float(row["delta_s"]), float(row["std_s"]))
        )

fig, ax = plt.subplots(figsize=(7, 4.5))
for clock, pts in series.items():
    pts.sort()
    ax.loglog([d for d, _ in pts], [s * 1e9 for _, s in pts], "o-", label=clock)
ax.set_xlabel("interval length (s)")
ax.set_ylabel("interval std (ns)")
ax.set_title("Interval jitter by clock under test")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"wrote {out}")
