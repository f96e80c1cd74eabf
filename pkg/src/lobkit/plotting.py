"""Figure rendering for the report path.

Uses ``matplotlib.figure.Figure`` directly so nothing depends on a pyplot
backend; every function writes one file and returns its path.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

_CLASS_COLORS = {"small": "tab:red", "medium": "tab:orange", "large": "tab:green"}
FIG_WIDTH = 6.4


def _figure(width=FIG_WIDTH, ratio=0.62, ncols=1):
    fig = Figure(figsize=(width * ncols, width * ratio))
    axes = [fig.add_subplot(1, ncols, i + 1) for i in range(ncols)]
    return fig, axes


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return path


def _color(tick_class):
    return _CLASS_COLORS.get(tick_class, "tab:blue")


def spread_pdf(stats_reports, path):
    fig, (ax,) = _figure()
    for rep in stats_reports:
        for year, entry in rep["years"].items():
            pdf = entry["spread_pdf"]
            x = np.array(sorted(int(k) for k in pdf))
            y = np.array([pdf[str(k)] for k in x])
            ax.plot(x, y, marker=".", color=_color(rep["tick_class"]), alpha=0.8,
                    label=f"{rep['stock']} {year}")
    ax.set_xlabel("spread [ticks]")
    ax.set_ylabel("PDF")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    return _save(fig, path)


def volume_ccdf(stats_reports, path):
    fig, (ax,) = _figure()
    for rep in stats_reports:
        for year, entry in rep["years"].items():
            rows = np.array(entry["best_volume_ccdf"], dtype=float)
            ask = rows[rows[:, 0] < 0]
            bid = rows[rows[:, 0] > 0]
            c = _color(rep["tick_class"])
            ax.step(ask[:, 0], ask[:, 1], where="post", color=c, alpha=0.8,
                    label=f"{rep['stock']} {year}")
            ax.step(bid[:, 0], bid[:, 1], where="post", color=c, alpha=0.8)
    ax.set_xscale("symlog", linthresh=10)
    ax.axvspan(ax.get_xlim()[0], 0, color="red", alpha=0.05)
    ax.axvspan(0, ax.get_xlim()[1], color="green", alpha=0.05)
    ax.set_xlabel("volume at best quote (ask < 0 < bid)")
    ax.set_ylabel("CCDF")
    ax.legend(fontsize=7)
    return _save(fig, path)


def depth_pdf(stats_reports, path):
    fig, axes = _figure(ncols=2)
    for ax, key, title in zip(axes, ("depth_pdf_ask", "depth_pdf_bid"), ("ask", "bid")):
        for rep in stats_reports:
            for year, entry in rep["years"].items():
                pdf = entry[key]
                if not pdf:
                    continue
                x = np.array(sorted(int(k) for k in pdf))
                ax.plot(x, [pdf[str(k)] for k in x], marker=".", color=_color(rep["tick_class"]),
                        alpha=0.8, label=f"{rep['stock']} {year}")
        ax.set_title(title)
        ax.set_xlabel("level 1 to level 10 distance [ticks]")
        ax.set_ylabel("PDF")
    axes[0].legend(fontsize=7)
    return _save(fig, path)


def metric_sweep(eval_reports, metric, path, label=None):
    """Metric against probability threshold, remaining data fraction on the top axis."""
    fig, (ax,) = _figure()
    fractions = []
    for rep in eval_reports:
        rows = rep["thresholds"]
        thr = [r["threshold"] for r in rows]
        vals = [np.nan if r[metric] is None else r[metric] for r in rows]
        ax.plot(thr, vals, marker="o", color=_color(rep.get("tick_class")),
                label=f"{rep.get('stock', '?')} H{rep.get('horizon', '?')}")
        fractions.append([r["remaining_fraction"] for r in rows])
    if fractions:
        thr = [r["threshold"] for r in eval_reports[0]["thresholds"]]
        top = ax.twiny()
        top.set_xlim(ax.get_xlim())
        top.set_xticks(thr)
        top.set_xticklabels([f"{100 * f:.0f}%" for f in np.mean(fractions, axis=0)], fontsize=7)
        top.set_xlabel("remaining data")
    ax.set_xlabel("probability threshold")
    ax.set_ylabel(label or metric)
    ax.legend(fontsize=7)
    return _save(fig, path)


def confusion_heatmap(matrix, path, title=""):
    fig, (ax,) = _figure(width=4.2, ratio=1.0)
    m = np.asarray(matrix, dtype=float)
    im = ax.imshow(m, cmap="Blues", vmin=0, vmax=1)
    names = ["Down", "Stable", "Up"]
    ax.set_xticks(range(3), names)
    ax.set_yticks(range(3), names)
    for i in range(3):
        for j in range(3):
            ax.text(j, i, f"{m[i, j]:.2f}", ha="center", va="center",
                    color="white" if m[i, j] > 0.5 else "black")
    ax.set_xlabel("predicted")
    ax.set_ylabel("target")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    return _save(fig, path)
