"""ESS-growth curves: mean effective sample size per scheme against the
number of samples used, with an optional optimal-proposal reference line.

Reads the benchmark harness CSV; output is a pure function of the input
files (figures carry no timestamps or random state).
"""

import argparse
import json
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaError, read_result_rows


def mean_curves(rows: list[dict]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-scheme (total_samples, mean ESS over runs) curves."""
    grouped: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    totals: dict[str, dict[int, int]] = defaultdict(dict)
    for row in rows:
        key = row["scheme"]
        grouped[key][row["iteration"]].append(row["ess_hat"])
        totals[key][row["iteration"]] = row["total_samples"]
    curves = {}
    for scheme, per_iter in grouped.items():
        iters = sorted(per_iter)
        x = np.array([totals[scheme][k] for k in iters], dtype=float)
        y = np.array([np.mean(per_iter[k]) for k in iters])
        curves[scheme] = (x, y)
    return curves


def plot_ess_curves(
    input_csv: str,
    output_path: str,
    upper_bound_slope: float | None = None,
    title: str = "Average ESS by re-weighting scheme",
) -> None:
    rows = read_result_rows(input_csv)
    curves = mean_curves(rows)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for scheme in sorted(curves):
        x, y = curves[scheme]
        ax.plot(x, y, label=scheme, linewidth=1.6)
    if upper_bound_slope is not None:
        xmax = max(x.max() for x, _ in curves.values())
        xs = np.array([0.0, xmax])
        ax.plot(
            xs,
            upper_bound_slope * xs,
            linestyle="--",
            color="black",
            linewidth=1.0,
            label=f"upper bound (slope {upper_bound_slope:g})",
        )
    ax.set_xlabel("samples used")
    ax.set_ylabel("mean ESS")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(output_path, dpi=120)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Render ESS-growth curves")
    parser.add_argument("--input", required=True, help="benchmark CSV")
    parser.add_argument("--output", required=True, help="output image path")
    parser.add_argument(
        "--summary",
        default=None,
        help="summary JSON; its upper_bound_slope is drawn when present",
    )
    parser.add_argument("--upper-bound-slope", type=float, default=None)
    parser.add_argument("--title", default="Average ESS by re-weighting scheme")
    args = parser.parse_args(argv)
    slope = args.upper_bound_slope
    try:
        if slope is None and args.summary is not None:
            with open(args.summary) as fh:
                slope = json.load(fh).get("upper_bound_slope")
        plot_ess_curves(args.input, args.output, slope, args.title)
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
