"""Optional PNG figures rendered from the report tables (``pshlab run --figures``).

Figures are drawn from the same tables that feed the CSV files, so a figure
never shows data that is not also on disk in delimited form.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_figures"]


def _numeric(tab, name):
    return all(isinstance(r[name], (int, float, np.number)) for r in tab.rows)


def _col(tab, name):
    """Column as floats; string labels (huge or staged indices) become ordinals."""
    if _numeric(tab, name):
        return np.array([float(r[name]) for r in tab.rows])
    return np.arange(len(tab.rows), dtype=float)


def _series(ax, tab, x, y, group=None, logy=True):
    if group is None:
        ax.plot(_col(tab, x), _col(tab, y), "o-", ms=3)
    else:
        xs = _col(tab, x)
        for g in sorted({r[group] for r in tab.rows}):
            idx = [i for i, r in enumerate(tab.rows) if r[group] == g]
            ax.plot(xs[idx], [tab.rows[i][y] for i in idx], "o-", ms=3, label=f"{group}={g}")
        ax.legend(fontsize=7)
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if logy and np.all(_col(tab, y) > 0):
        ax.set_yscale("log")
    if x == "j" and _numeric(tab, "j"):
        ax.set_xscale("log", base=2)
    elif not _numeric(tab, x):
        ax.set_xlabel(f"{x} (ordinal; labels in the CSV)")


def _draw(tab, ax):
    cols = list(tab.columns)
    if cols == ["j", "delta", "cap"]:
        _series(ax, tab, "j", "cap", group="delta")
    elif cols[0] == "j" and len(cols) == 2:
        _series(ax, tab, "j", cols[1])
    elif cols == ["eps", "C", "I_chi"]:
        _series(ax, tab, "C", "I_chi", group="eps")
        ax.set_xscale("log", base=2)
    elif cols[0] == "t":
        for c in cols[1:]:
            ax.plot(_col(tab, "t"), _col(tab, c), label=c)
        ax.set_xlabel("t")
        ax.legend(fontsize=7)
    elif cols == ["potential", "t", "mass"]:
        ax.stem(_col(tab, "t"), _col(tab, "mass"))
        ax.set_xlabel("t")
        ax.set_ylabel("MA mass")
    elif cols == ["level", "index", "gap"]:
        _series(ax, tab, "level", "gap")
    else:
        return False
    return True


def render_figures(report, out_dir) -> list:
    """One PNG per table with a known column layout; returns the written paths."""
    written = []
    for tab in report.tables:
        if not tab:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        try:
            if not _draw(tab, ax):
                continue
            ax.set_title(tab.name, fontsize=9)
            fig.tight_layout()
            path = os.path.join(out_dir, f"{tab.name}.png")
            fig.savefig(path, dpi=110)
            written.append(path)
        finally:
            plt.close(fig)
    return written
