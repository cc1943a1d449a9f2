"""
Plot an exponent-sweep CSV: E*(r) with the regime boundaries marked.

    python plot_exponent_curve.py data/bernoulli_exponent.csv data/bernoulli_exponent.png
"""
import math
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from app.services.report import column, read_csv  # noqa: E402


def plot(csv_path: str, png_path: str) -> None:
    table = read_csv(csv_path)
    axis = table.columns[0]
    xs = column(table, axis)
    ys = column(table, "exponent")
    finite = [(x, y) for x, y in zip(xs, ys) if math.isfinite(y)]

    fig, ax = plt.subplots(figsize=(6, 4))
    if finite:
        ax.plot(*zip(*finite), marker=".", label="E*")
    for key, style in (("r_infinite", ":"), ("r_zero", "--")):
        if key in table.metadata:
            ax.axvline(float(table.metadata[key]), linestyle=style, color="gray", label=key)
    ax.set_xlabel(axis)
    ax.set_ylabel(f"exponent ({table.metadata.get('units', 'nats')})")
    ax.set_title(f"D = {table.metadata.get('D', '?')}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    print(f"Saved {png_path}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        print("usage: python plot_exponent_curve.py <sweep.csv> <out.png>")
        sys.exit(1)
    plot(sys.argv[1], sys.argv[2])
