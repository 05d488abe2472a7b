"""Plot a comparison CSV written by ``netmaddpg compare``.

usage: python scripts/plot_comparison.py comparison.csv [-o figure.png]

Needs matplotlib, which the package itself does not depend on.
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        algos = reader.fieldnames[2:]
        series = defaultdict(lambda: defaultdict(list))  # group -> algo -> [(step, score)]
        for row in reader:
            for algo in algos:
                series[row["agent_or_team"]][algo].append((int(row["step"]), float(row[algo])))
    return algos, series


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--baseline", type=float, help="draw a horizontal random-policy reference")
    args = p.parse_args()

    algos, series = load(args.csv)
    fig, axes = plt.subplots(1, len(series), figsize=(6 * len(series), 4), squeeze=False)
    for ax, (group, by_algo) in zip(axes[0], series.items()):
        for algo in algos:
            steps, scores = zip(*by_algo[algo])
            ax.plot(steps, scores, label=algo)
        if args.baseline is not None:
            ax.axhline(args.baseline, color="grey", linestyle="--", label="random policy")
        ax.set_xlabel("environment steps")
        ax.set_ylabel("mean evaluation score")
        ax.set_title(group)
        ax.legend()
    fig.tight_layout()
    out = args.output or args.csv.with_suffix(".png")
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
