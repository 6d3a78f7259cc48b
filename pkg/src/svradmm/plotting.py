"""Figure rendering for experiment reports.

One PNG per plot kind, drawn next to the CSV files that
:func:`svradmm.bench.emit_plot_data` writes.  Headless backend; nothing
here opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bench import PLOT_KINDS

__all__ = ["render_plot"]

_YLABELS = {
    "loss_vs_epoch": "training loss gap",
    "variance_vs_epoch": "gradient estimator variance",
    "accuracy_vs_epoch": "test accuracy",
    "psi_vs_iter": "potential energy",
}

_XLABELS = {"psi_vs_iter": "iteration"}


def render_plot(report: dict, kind: str, out_dir) -> Path:
    """Draw every solver's mean curve with stderr band for ``kind``.

    Returns the PNG path.  Solvers without the metric are skipped; an
    empty figure is an error.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {sorted(PLOT_KINDS)}")
    metric_key = PLOT_KINDS[kind]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    drawn = 0
    for label, entry in report["solvers"].items():
        metric = entry["metrics"].get(metric_key)
        if metric is None:
            continue
        xs = metric["index"]
        mean = metric["mean"]
        err = metric["stderr"]
        line, = ax.plot(xs, mean, label=label, linewidth=1.6)
        lo = [m - e for m, e in zip(mean, err)]
        hi = [m + e for m, e in zip(mean, err)]
        ax.fill_between(xs, lo, hi, alpha=0.18, color=line.get_color())
        drawn += 1
    if not drawn:
        plt.close(fig)
        raise ValueError(f"no solver in the report recorded data for {kind!r}")
    if kind in ("loss_vs_epoch", "variance_vs_epoch"):
        positive = all(
            v > 0.0
            for entry in report["solvers"].values()
            if entry["metrics"].get(metric_key)
            for v in entry["metrics"][metric_key]["mean"])
        if positive:
            ax.set_yscale("log")
    ax.set_xlabel(_XLABELS.get(kind, "epoch"))
    ax.set_ylabel(_YLABELS[kind])
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = out_dir / f"{kind}.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
