"""Figure output. Uses the object-oriented matplotlib API (no pyplot state)."""

from __future__ import annotations

import io
import math

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

STYLE = {
    "font.size": 10,
    "axes.labelsize": 11,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.4,
    "lines.linewidth": 1.6,
    "svg.fonttype": "path",
    "svg.hashsalt": "eigexplore",
}


def _new_figure(width=6.4, height=None):
    if height is None:
        height = width * (math.sqrt(5) - 1.0) / 2.0
    fig = Figure(figsize=(width, height), facecolor="w")
    FigureCanvasSVG(fig)
    return fig


def _save_svg(fig, path):
    from .harness import atomic_write_text

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    atomic_write_text(path, buf.getvalue())


def plot_entropy_curves(curves, path, references=None, title="Stationary entropy vs. value-iteration steps"):
    """One line per method with a one-standard-deviation band.

    ``curves`` maps label to an object with ``iterations``, ``mean`` and
    ``std``; ``references`` maps label to a horizontal line value.
    """
    with matplotlib.rc_context(STYLE):
        fig = _new_figure()
        ax = fig.add_subplot(1, 1, 1)
        for label, c in curves.items():
            (line,) = ax.plot(c.iterations, c.mean, label=label, drawstyle="steps-post", gid=f"curve-{label}")
            ax.fill_between(c.iterations, c.mean - c.std, c.mean + c.std, step="post",
                            color=line.get_color(), alpha=0.2, linewidth=0)
        for i, (label, value) in enumerate((references or {}).items()):
            if value is not None:
                ax.axhline(value, color="k", linestyle=("--", ":")[i % 2], linewidth=1, label=label)
        ax.set_xlabel("iterations (synchronous value updates)")
        ax.set_ylabel("entropy (nats)")
        ax.set_title(title)
        ax.legend(loc="lower right")
        _save_svg(fig, path)


def plot_ppi_trace(trace, path):
    """Per-PPI-iteration entropies of a single EVE run."""
    with matplotlib.rc_context(STYLE):
        fig = _new_figure(width=5.0)
        ax = fig.add_subplot(1, 1, 1)
        ax.plot(trace.column("steps"), trace.column("entropy_stationary"), marker="o", ms=3, label="H(d_pi)")
        ax.plot(trace.column("steps"), trace.column("theta_star"), linestyle="--", label="theta*")
        ax.set_xlabel("iterations")
        ax.set_ylabel("nats")
        ax.legend(loc="lower right")
        _save_svg(fig, path)
