#!/usr/bin/env python3
"""Render the CSVs produced by run_trends.py into PNG figures.

Purely cosmetic; everything asserted about the system lives in the CSVs and
the test suite.
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

MARKERS = {"JOINT": "o", "CCRA": "s", "SCRA": "^", "RSBA": "v",
           "FPCR": "D", "MRC": "x"}


def _load_aggregate(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _plot_sweep(rows, xlabel, out_png, xscale=1.0):
    series = defaultdict(list)
    for r in rows:
        series[r["scheme"]].append((float(r["sweep_value"]) * xscale,
                                    float(r["mean_max_latency_s"])))
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for scheme, pts in series.items():
        pts.sort()
        ax.plot(*zip(*pts), marker=MARKERS.get(scheme, "."), label=scheme)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("max task completion latency (s)")
    ax.grid(alpha=0.3, linestyle=":")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    print("wrote", out_png)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--results", type=Path, default=Path("results"))
    args = parser.parse_args(argv)
    root = args.results

    eta = root / "eta_sweep" / "aggregate.csv"
    if eta.is_file():
        _plot_sweep(_load_aggregate(eta), "offloading ratio",
                    root / "latency_vs_eta.png")
    mec = root / "mec_sweep" / "aggregate.csv"
    if mec.is_file():
        _plot_sweep(_load_aggregate(mec), "MEC capacity (Gcycles/s)",
                    root / "latency_vs_mec.png", xscale=1e-9)
    thr = root / "threshold_sweep" / "aggregate.csv"
    if thr.is_file():
        _plot_sweep(_load_aggregate(thr), "sensing SINR threshold (linear)",
                    root / "latency_vs_threshold.png")

    det = root / "detection.csv"
    if det.is_file():
        with open(det, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        xs = [float(r["distance_m"]) for r in rows]
        ys = [float(r["mean_detection_probability"]) for r in rows]
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.plot(xs, ys, marker="o")
        ax.set_xlabel("target distance (m)")
        ax.set_ylabel("average detection probability")
        ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3, linestyle=":")
        fig.tight_layout()
        fig.savefig(root / "detection_vs_distance.png", dpi=150)
        plt.close(fig)
        print("wrote", root / "detection_vs_distance.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
