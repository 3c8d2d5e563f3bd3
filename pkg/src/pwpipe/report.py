"""Delimited-text reports and the figure renderers.

Tables are tab-separated with a single header row and %.8g floats, so
re-emission of identical results is byte-identical.  Figures are rendered
with the Agg backend straight to files; no display window is opened.
"""

from __future__ import annotations

import numpy as np

from .pipeline import METRIC_COLUMNS, FrameRateReport


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".8g")


def write_table(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row width {len(row)} != {len(columns)} columns")
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"empty report file {path}")
    header = lines[0].split("\t")
    return header, [ln.split("\t") for ln in lines[1:]]


def emit_report(rows, path) -> None:
    """Metrics table, one row per (image set, method)."""
    write_table(path, METRIC_COLUMNS, rows)


def emit_fps_report(report: FrameRateReport, path) -> None:
    cols = ["quantity", "value"]
    rows = [
        ("frames_processed", report.frames_processed),
        ("duration_s", report.duration_s),
        ("mean_fps", report.mean_fps),
        ("std_fps", report.std_fps),
        ("inclusive_fps", report.inclusive_fps),
        ("exclusive_fps", report.exclusive_fps),
    ]
    for name, ms in report.stage_ms.items():
        rows.append((f"stage_ms.{name}", ms))
    write_table(path, cols, rows)


def emit_stats_report(path, methods, mean_ranks, friedman, nemenyi_p) -> None:
    """Friedman summary plus the pairwise post-hoc matrix in long form."""
    cols = ["quantity", "value"]
    rows = [
        ("friedman_chi2", friedman[0]),
        ("friedman_p", friedman[1]),
    ]
    for m, r in zip(methods, mean_ranks):
        rows.append((f"mean_rank.{m}", r))
    k = len(methods)
    for i in range(k):
        for j in range(i + 1, k):
            rows.append((f"nemenyi_p.{methods[i]}.vs.{methods[j]}", nemenyi_p[i][j]))
    write_table(path, cols, rows)


# ---------------------------------------------------------------------------
# Figures (matplotlib imported lazily so library use stays lightweight)


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_panes(images: dict, path, title: str | None = None) -> None:
    """Side-by-side grayscale panes, one per pipeline stage."""
    plt = _plt()
    n = len(images)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 4.4), squeeze=False)
    for ax, (label, img) in zip(axes[0], images.items()):
        g = img.grid
        ax.imshow(
            np.asarray(img.pixels), cmap="gray", vmin=0.0, vmax=1.0, aspect="auto",
            extent=[g.lateral_min * 1e3, g.lateral_max * 1e3,
                    g.axial_max * 1e3, g.axial_min * 1e3],
        )
        ax.set_title(label)
        ax.set_xlabel("lateral [mm]")
        ax.set_ylabel("axial [mm]")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_metric_bars(rows, path) -> None:
    """Grouped bars per metric over (image set, method) rows."""
    plt = _plt()
    labels = [f"{r[0]}/{r[1]}" for r in rows]
    metric_names = METRIC_COLUMNS[2:]
    fig, axes = plt.subplots(1, len(metric_names), figsize=(3.2 * len(metric_names), 3.6))
    for ax, (mi, mname) in zip(np.atleast_1d(axes), enumerate(metric_names)):
        vals = [float(r[2 + mi]) for r in rows]
        ax.bar(range(len(vals)), vals, color="#4878a8")
        ax.set_xticks(range(len(vals)))
        ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
        ax.set_title(mname)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_fps(report: FrameRateReport, path) -> None:
    plt = _plt()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(range(1, len(report.window_fps) + 1), report.window_fps, marker="o")
    ax1.axhline(report.mean_fps, color="gray", linestyle="--",
                label=f"mean {report.mean_fps:.1f} FPS")
    ax1.set_xlabel("1-second window")
    ax1.set_ylabel("frames per second")
    ax1.legend()
    names = list(report.stage_ms)
    ax2.bar(names, [report.stage_ms[n] for n in names], color="#4878a8")
    ax2.set_ylabel("mean latency [ms]")
    ax2.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_training_curves(log_path, path) -> None:
    """Loss-vs-step (or epoch) lines for every numeric loss column."""
    from .train.logs import read_training_log

    plt = _plt()
    _, cols = read_training_log(log_path)
    xkey = "epoch" if "epoch" in cols else "step"
    x = cols[xkey]
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, ys in cols.items():
        if name in (xkey, "lr"):
            continue
        ax.plot(x, ys, label=name, linewidth=1.0)
    ax.set_xlabel(xkey)
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_mean_ranks(methods, ranks, path) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.bar(list(methods), list(ranks), color="#4878a8")
    ax.set_ylabel("mean rank (higher = scored better)")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
