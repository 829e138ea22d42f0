"""Convergence curves from `mopc solve` run directories.

    mopc solve --seed 3 --scheme mopc --out runs/mopc
    mopc solve --seed 3 --scheme num --out runs/num
    python3 scripts/plot_convergence.py runs/mopc runs/num --out convergence.png

Needs matplotlib (pip install -e .[plot]).
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from mopc.cli import trace_to_plot_columns  # noqa: E402
from mopc.model import read_trace  # noqa: E402


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("runs", nargs="+", help="run directories or trace.csv files")
    p.add_argument("--out", default="convergence.png")
    args = p.parse_args(argv)

    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    for run in args.runs:
        path = Path(run)
        path = path / "trace.csv" if path.is_dir() else path
        names, cols = trace_to_plot_columns(*read_trace(path))
        label = path.parent.name
        it = cols[:, 0]
        axes[0].plot(it, cols[:, 1], label=f"{label} p_res")
        axes[0].plot(it, cols[:, 2], "--", label=f"{label} {names[2].removeprefix('log10_')}")
        axes[1].plot(it, cols[:, 3], label=label)
        axes[2].semilogy(it, cols[:, 5] + 1e-16, label=label)
    axes[0].set_title("log10 residuals")
    axes[1].set_title("log10 vio")
    axes[2].set_title("|obj - obj_final| / |obj_final|")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
