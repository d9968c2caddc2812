#!/usr/bin/env python3
"""Plot the closed-loop settling trace emitted by `vht-lab settle`.

Usage: plot_settle.py [out/settle.csv] [figure.png]
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "out/settle.csv"
out = sys.argv[2] if len(sys.argv) > 2 else "settle.png"

t, e, gamma = [], [], []
with open(path) as f:
    for row in csv.DictReader(f):
        t.append(float(row["t_s"]))
        e.append(float(row["e_s"]) * 1e6)
        gamma.append(float(row["gamma_ppm"]))

fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5.5))
ax1.plot(t, e)
ax1.set_ylabel("accumulated error (us)")
ax1.grid(alpha=0.3)
ax2.plot(t, gamma)
ax2.set_xlabel("time (s)")
ax2.set_ylabel("rate correction (ppm)")
ax2.grid(alpha=0.3)
ax1.set_title("Skew-correction loop under constant relative skew")
ax1.set_xlim(0, min(max(t), 40.0))
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"wrote {out}")
