"""Density panels for the inconsistent-proposal illustration.

Each panel overlays h(x)q(x)/p^u(x), p^u(x) and the u-independent product
h(x)q(x) for one proposal shift u, from the density table emitted by the
benchmark's counterexample command.  The area under h q (the quantity being
estimated) is annotated by trapezoidal quadrature.
"""

import argparse
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaError, read_density_rows


def plot_density_overlay(
    input_csv: str,
    output_path: str,
    u_values: list[float] | None = None,
) -> None:
    rows = read_density_rows(input_csv)
    panels: dict[float, list[dict]] = defaultdict(list)
    for row in rows:
        panels[row["u"]].append(row)
    us = sorted(panels) if u_values is None else list(u_values)
    missing = [u for u in us if u not in panels]
    if missing:
        raise SchemaError(f"{input_csv}: no rows for u values {missing}")

    ncols = 2
    nrows = -(-len(us) // ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(9.0, 3.2 * nrows), squeeze=False, sharex=True
    )
    for idx, u in enumerate(us):
        ax = axes[idx // ncols][idx % ncols]
        data = sorted(panels[u], key=lambda r: r["x"])
        x = np.array([r["x"] for r in data])
        ratio = np.array([r["hq_over_pu"] for r in data])
        pu = np.array([r["pu"] for r in data])
        hq = np.array([r["hq"] for r in data])
        ax.plot(x, ratio, "-", color="tab:blue", label="h q / p^u")
        ax.plot(x, pu, "--", color="tab:orange", label="p^u")
        ax.plot(x, hq, ":", color="tab:green", label="h q")
        area = np.trapezoid(hq, x)
        ax.set_title(f"u = {u:g}   (area under h q = {area:.4f})", fontsize=10)
        ax.grid(True, alpha=0.3)
        if idx == 0:
            ax.legend(fontsize=8)
    for idx in range(len(us), nrows * ncols):
        axes[idx // ncols][idx % ncols].axis("off")
    fig.tight_layout()
    fig.savefig(output_path, dpi=120)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Render density overlay panels")
    parser.add_argument("--input", required=True, help="density CSV (u,x,...)")
    parser.add_argument("--output", required=True, help="output image path")
    parser.add_argument(
        "--u-values",
        default=None,
        help="comma-separated list of panels to draw (default: all in the file)",
    )
    args = parser.parse_args(argv)
    us = None
    if args.u_values:
        us = [float(v) for v in args.u_values.split(",") if v]
    try:
        plot_density_overlay(args.input, args.output, us)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
