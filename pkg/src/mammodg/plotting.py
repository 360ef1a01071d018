"""Figure output for FROC curves and detected/missed box-size scatter plots.

Figures are written with fixed sizes, a fixed SVG hash salt and no date
metadata, so identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .froc import read_curve_csv  # noqa: E402

FIG_SIZE = (4.0, 4.0)
AXES_RECT = (0.15, 0.15, 0.80, 0.80)  # left, bottom, width, height in figure fractions

STYLE = {
    "svg.hashsalt": "mammodg",
    "svg.fonttype": "none",
    "path.simplify": False,
    "path.snap": False,
    "font.size": 9,
    "axes.linewidth": 0.8,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _metadata(path: Path):
    fmt = path.suffix.lower().lstrip(".")
    if fmt == "svg":
        return {"Date": None, "Creator": None}
    if fmt == "pdf":
        return {"CreationDate": None, "ModDate": None, "Creator": None, "Producer": None}
    if fmt == "png":
        return {"Software": None}
    return None


def _new_axes():
    fig = plt.figure(figsize=FIG_SIZE)
    ax = fig.add_axes(AXES_RECT)
    return fig, ax


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, metadata=_metadata(path))
    plt.close(fig)


def froc_step_xy(fppi, tpr, f_max=1.0):
    """Step-plot vertices with the last TPR held out to ``f_max``."""
    xs, ys = list(map(float, fppi)), list(map(float, tpr))
    if xs[-1] < f_max:
        xs.append(float(f_max))
        ys.append(ys[-1])
    return xs, ys


def plot_froc(curve_csvs: Sequence, out_path, labels: Sequence[str] | None = None, f_max: float = 1.0):
    """Overlay one step series per curve CSV; each line gets gid ``froc-series-<i>``."""
    curve_csvs = list(curve_csvs)
    if labels is None:
        labels = [Path(p).stem for p in curve_csvs]
    if len(labels) != len(curve_csvs):
        raise ValueError("need one label per curve file")
    with plt.rc_context(STYLE):
        fig, ax = _new_axes()
        for i, (path, label) in enumerate(zip(curve_csvs, labels)):
            _, fppi, tpr = read_curve_csv(path)
            xs, ys = froc_step_xy(fppi, tpr, f_max)
            (line,) = ax.plot(xs, ys, drawstyle="steps-post", label=label, linewidth=1.2)
            line.set_gid(f"froc-series-{i}")
        ax.set_xlim(0.0, f_max)
        ax.set_ylim(0.0, 1.0)
        ax.set_xlabel("False positives per image")
        ax.set_ylabel("True positive rate")
        ax.legend(loc="lower right")
        _save(fig, out_path)


def plot_scatter(records, out_path, title: str | None = None):
    """Box width against height in mm; detected in green, missed in red."""
    with plt.rc_context(STYLE):
        fig, ax = _new_axes()
        for detected, color, label in ((True, "tab:green", "detected"), (False, "tab:red", "missed")):
            pts = [(r.width_mm, r.height_mm) for r in records if r.detected == detected]
            if pts:
                xs, ys = zip(*pts)
                coll = ax.scatter(xs, ys, s=8, c=color, label=label, linewidths=0)
                coll.set_gid(f"scatter-{label}")
        ax.set_xlabel("Width (mm)")
        ax.set_ylabel("Height (mm)")
        if title:
            ax.set_title(title)
        if records:
            ax.legend(loc="upper left")
        _save(fig, out_path)
