"""Figure style and the regret charts written by the report path."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

RC = {
    "figure.figsize": (5.0, 3.2),
    "font.size": 9,
    "font.family": "serif",
    "mathtext.fontset": "stix",
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "savefig.bbox": "tight",
    "svg.fonttype": "none",
    "svg.hashsalt": "bandit-ot",
}


def new_figure(**kw) -> tuple[Figure, object]:
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=kw.pop("figsize", RC["figure.figsize"]))
        ax = fig.add_subplot(1, 1, 1, **kw)
    return fig, ax


def save_figure(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(RC):
        fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None})
    return path


def regret_chart(records, column: str = "cum_kant_lo", bound=None, title: str | None = None) -> Figure:
    """Median cumulative regret with the min-max band over repetitions,
    optionally against a bound report."""
    with matplotlib.rc_context(RC):
        fig, ax = new_figure()
        curves = [np.asarray(r.columns[column], dtype=float) for r in records if r.T]
        if curves:
            T = min(len(c) for c in curves)
            stack = np.array([c[:T] for c in curves])
            t = np.arange(1, T + 1)
            ax.fill_between(t, stack.min(axis=0), stack.max(axis=0), color="C0", alpha=0.2, lw=0)
            ax.plot(t, np.median(stack, axis=0), color="C0", label=f"median {column}")
        if bound is not None and len(bound.T):
            ax.plot(bound.T, bound.total, color="C3", ls="--", label=f"bound ({bound.name})")
        ax.set_xlabel("round $t$")
        ax.set_ylabel("cumulative pseudo-regret")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left")
    return fig
