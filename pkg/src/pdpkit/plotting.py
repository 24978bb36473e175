"""Figures for experiment reports, written as PNG files."""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dialog import WINDOWS  # noqa: E402
from .metrics import EvalReport  # noqa: E402
from .report import grid_rows  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "savefig.dpi": 100,
}

# PNG metadata stays fixed so reruns give identical bytes
_META = {"Software": None}


def accuracy_figure(reports: Sequence[EvalReport]):
    """Grouped bars: accuracy per window for each row, with the majority baseline dashed."""
    rows = grid_rows(reports)
    used = [w for w in WINDOWS if any(w in cols for _, cols in rows)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        width = 0.8 / max(len(rows), 1)
        for k, (name, cols) in enumerate(rows):
            xs = [j + (k - (len(rows) - 1) / 2) * width for j, w in enumerate(used) if w in cols]
            ys = [100 * cols[w].accuracy for w in used if w in cols]
            ax.bar(xs, ys, width=width * 0.95, label=name)
        if reports:
            ax.axhline(100 * reports[0].baseline[1], color="k", ls="--", lw=0.8, label="majority baseline")
        ax.set_xticks(range(len(used)))
        ax.set_xticklabels(used)
        ax.set_ylabel("accuracy (%)")
        lo = min([100 * r.accuracy for r in reports] + [100 * r.baseline[1] for r in reports], default=0)
        ax.set_ylim(max(0.0, lo - 10), 100)
        ax.legend(loc="upper center", bbox_to_anchor=(0.5, -0.12), ncol=3)
        fig.tight_layout()
    return fig


def save_png(fig, path: str | None = None) -> bytes:
    """Render ``fig`` to PNG bytes, writing them to ``path`` when given."""
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata=_META)
    plt.close(fig)
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data
