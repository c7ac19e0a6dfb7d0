#!/usr/bin/env python3
"""Plot mbq CSV artifacts.

    plot.py curves out/fig1 -o fig1.png
    plot.py returns out/fig2/taxi_syncmbq_a0.1 out/fig2/taxi_qlearning_a0.1 -o taxi.png
"""

import argparse
import csv
import glob
import os
import re

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(rows))


def curves(args):
    rows = read(os.path.join(args.dirs[0], "error_curve.csv"))
    steps = [int(r["step"]) for r in rows]
    seeds = [k[len("err_seed"):] for k in rows[0] if k.startswith("err_seed")]
    fig, ax = plt.subplots(figsize=(7, 4))
    for s in seeds:
        line, = ax.plot(steps, [float(r[f"err_seed{s}"]) for r in rows], alpha=0.25, lw=0.8)
        ax.plot(steps, [float(r[f"ma_seed{s}"]) for r in rows], color=line.get_color(), label=f"seed {s}")
    ax.set_yscale("log")
    ax.set_xlabel("step k")
    ax.set_ylabel("||Q_k - Q*||_inf")
    ax.legend(fontsize=7, ncol=2)
    return fig


def returns(args):
    fig, ax = plt.subplots(figsize=(7, 4))
    for d in args.dirs:
        files = sorted(glob.glob(os.path.join(d, "episodes_seed*.csv")))
        if not files:
            continue
        series = [[float(r["moving_average"]) for r in read(p)] for p in files]
        n = min(len(s) for s in series)
        mean = [sum(s[i] for s in series) / len(series) for i in range(n)]
        sd = [(sum((s[i] - mean[i]) ** 2 for s in series) / len(series)) ** 0.5 for i in range(n)]
        x = range(1, n + 1)
        label = re.sub(r"^.*/", "", d.rstrip("/"))
        ax.plot(x, mean, label=f"{label} ({len(series)} seeds)")
        ax.fill_between(x, [m - s for m, s in zip(mean, sd)], [m + s for m, s in zip(mean, sd)], alpha=0.2)
    ax.set_xlabel("episode")
    ax.set_ylabel("episode return (moving average)")
    ax.legend(fontsize=8)
    return fig


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("kind", choices=["curves", "returns"])
    p.add_argument("dirs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    args = p.parse_args()
    fig = curves(args) if args.kind == "curves" else returns(args)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()
