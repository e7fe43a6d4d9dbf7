"""Figure rendering for the report paths.

Consumes the rows the analysis layer emits and draws them with matplotlib;
figures land next to the delimited output so a report directory is
self-contained.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .analysis import Report  # noqa: E402

# strip the Software tag so figure bytes depend only on the drawn content
_PNG_META = {"Software": None}


def render_sweep_figure(report: Report, path: str | Path) -> None:
    """Line chart of held-out loss against the swept variable."""
    xs = [row[report.variable] for row in report.rows]
    ys = [row["heldout_loss"] for row in report.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel(report.variable)
    ax.set_ylabel("held-out loss (nats/token)")
    ax.set_title(f"held-out loss vs {report.variable}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def render_scatter_figure(
    x, y, xlabel: str, ylabel: str, r: float, path: str | Path
) -> None:
    """Scatter plot annotated with the Pearson coefficient."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(x, y, s=8, alpha=0.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(f"{ylabel} vs {xlabel} (pearson r = {r:.4f})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
