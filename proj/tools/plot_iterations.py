#!/usr/bin/env python3
"""Plot value-vs-iteration curves from one or more iterations.csv files.

Usage: plot_iterations.py run1/iterations.csv [run2/iterations.csv ...] [-o out.png]

Bare-bones companion to the solver's CSV logs; anything fancier should read
the CSVs directly.
"""
import argparse
import csv


def read_log(path):
    ts, values = [], []
    with open(path) as fh:
        for row in csv.DictReader(r for r in fh if not r.startswith("#")):
            ts.append(int(row["t"]))
            values.append(float(row["value_b0"]))
    return ts, values


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("logs", nargs="+")
    ap.add_argument("-o", "--out", default="iterations.png")
    args = ap.parse_args()

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for path in args.logs:
        ts, values = read_log(path)
        plt.plot(ts, values, marker="o", label=path)
    plt.xlabel("iteration")
    plt.ylabel("value at the initial belief")
    plt.legend()
    plt.grid(True, alpha=0.3)
    plt.savefig(args.out, dpi=150, bbox_inches="tight")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
