"""Report rendering: learning-curve and profile figures next to their CSVs.

Figures are SVG with a fixed hash salt and no date metadata, so identical
inputs produce byte-identical files.
"""

import csv

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import UsageError  # noqa: E402

METRICS = ("rmse", "mae", "maxerr")
_METRIC_LABEL = {"rmse": "RMSE", "mae": "MAE", "maxerr": "max error"}
_HASH_SALT = "nngp-al"

CURVE_FIELDS = ("iteration", "strategy", "seed", "rmse", "mae", "maxerr")


def save_svg(fig, path) -> None:
    """Write a figure as deterministic SVG."""
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _new_figure(xlabel, ylabel):
    plt.rcParams["svg.hashsalt"] = _HASH_SALT
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def write_curves_csv(rows, path) -> None:
    rows = sorted(rows, key=lambda r: (r["strategy"], int(r["seed"]), int(r["iteration"])))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in CURVE_FIELDS})


def read_curves_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CURVE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise UsageError(f"{path} lacks columns {sorted(missing)}")
        rows = []
        for raw in reader:
            rows.append({
                "iteration": int(raw["iteration"]),
                "strategy": raw["strategy"],
                "seed": int(raw["seed"]),
                "rmse": float(raw["rmse"]),
                "mae": float(raw["mae"]),
                "maxerr": float(raw["maxerr"]),
            })
    return rows


def aggregate_curves(rows, metric: str, how: str = "median") -> dict:
    """Per-strategy aggregated learning curve: strategy -> (iterations, values)."""
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}; choose from {METRICS}")
    reduce = {"median": np.median, "mean": np.mean}.get(how)
    if reduce is None:
        raise UsageError(f"unknown aggregation {how!r}")
    curves = {}
    for strategy in sorted({r["strategy"] for r in rows}):
        by_iter = {}
        for r in rows:
            if r["strategy"] == strategy:
                by_iter.setdefault(r["iteration"], []).append(r[metric])
        iters = sorted(by_iter)
        curves[strategy] = (
            np.asarray(iters),
            np.asarray([reduce(by_iter[i]) for i in iters]),
        )
    return curves


def plot_learning_curves(rows, metric: str, path, how: str = "median") -> None:
    """One aggregated line per strategy, iteration on x, the metric on y."""
    curves = aggregate_curves(rows, metric, how)
    if not curves:
        raise UsageError("no curve rows to plot")
    fig, ax = _new_figure("active-learning iteration", f"{how} test {_METRIC_LABEL[metric]}")
    for strategy, (iters, values) in curves.items():
        ax.plot(iters, values, marker="o", markersize=3, label=strategy)
    ax.legend()
    save_svg(fig, path)


def write_dolan_more_csv(table, path) -> None:
    names = table.algorithms or tuple(f"alg{i}" for i in range(table.rho.shape[0]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", *names])
        for i, tau in enumerate(table.tau_grid):
            writer.writerow([repr(float(tau)), *(repr(float(v)) for v in table.rho[:, i])])


def plot_dolan_more(table, path) -> None:
    """Right-continuous step curves, fraction of problems within factor tau."""
    names = table.algorithms or tuple(f"alg{i}" for i in range(table.rho.shape[0]))
    fig, ax = _new_figure(r"performance ratio $\tau$", r"fraction of problems $\rho(\tau)$")
    for a, name in enumerate(names):
        ax.step(table.tau_grid, table.rho[a], where="post", label=name)
    ax.set_ylim(-0.02, 1.05)
    ax.legend(loc="lower right")
    save_svg(fig, path)
