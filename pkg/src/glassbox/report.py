"""Rendering for benchmark and diagnostics artifacts.

Everything written here embeds the run fingerprint: JSON carries it as a
top-level field, CSV as a leading `#` comment line, PNG in the image
metadata. Figures use the Agg backend so rendering works headless.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .diagnostics import Timeline
from .metrics import DisagreementMatrix, LatencyStats
from .models import TrainingTrace


def _stamp(fingerprint: str) -> str:
    return f"glassbox {__version__} fingerprint={fingerprint}"


def write_json(path: str | Path, payload: dict, fingerprint: str) -> Path:
    path = Path(path)
    doc = {"tool_version": __version__, "fingerprint": fingerprint, **payload}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def write_csv(path: str | Path, csv_text: str, fingerprint: str) -> Path:
    path = Path(path)
    path.write_text(f"# {_stamp(fingerprint)}\n" + csv_text)
    return path


def _save(fig, path: str | Path, fingerprint: str) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Description": _stamp(fingerprint)})
    plt.close(fig)
    return path


def disagreement_heatmap(matrix: DisagreementMatrix, path: str | Path,
                         fingerprint: str = "") -> Path:
    n = len(matrix.methods)
    fig, ax = plt.subplots(figsize=(1.2 * n + 2, 1.0 * n + 1.5))
    im = ax.imshow(matrix.values, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(n), matrix.methods, rotation=30, ha="right")
    ax.set_yticks(range(n), matrix.methods)
    for i in range(n):
        for j in range(n):
            v = matrix.values[i, j]
            ax.text(j, i, f"{v:.2f}", ha="center", va="center",
                    color="white" if v < 0.5 else "black", fontsize=9)
    label = ("top-k rank agreement" if matrix.metric_name == "rank_agreement"
             else "Jensen-Shannon distance")
    ax.set_title(f"explainer pairwise {label}")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    return _save(fig, path, fingerprint)


def latency_bars(stats: list[LatencyStats], path: str | Path,
                 fingerprint: str = "") -> Path:
    stats = sorted(stats, key=lambda s: s.median_ms)
    names = [s.method for s in stats]
    med = np.array([s.median_ms for s in stats])
    p95 = np.array([s.p95_ms for s in stats])
    fig, ax = plt.subplots(figsize=(7, 0.6 * len(stats) + 1.5))
    y = np.arange(len(stats))
    ax.barh(y, med, color="steelblue", label="median")
    ax.errorbar(p95, y, xerr=None, fmt="d", color="darkorange", label="p95")
    ax.set_yticks(y, names)
    ax.set_xscale("log")
    ax.set_xlabel("latency per instance (ms, log scale)")
    ax.set_title("explanation latency")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path, fingerprint)


def training_curves(trace: TrainingTrace, path: str | Path,
                    fingerprint: str = "") -> Path:
    epochs = np.arange(trace.n_epochs)
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    panels = [("loss", trace.loss, "tab:red"),
              ("train accuracy", trace.accuracy, "tab:blue"),
              ("mean active groups", trace.active_count, "tab:green"),
              ("gate temperature", trace.temperature, "tab:purple")]
    for ax, (title, series, color) in zip(axes.ravel(), panels):
        ax.plot(epochs, series, color=color)
        ax.set_title(title)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("epoch")
    fig.tight_layout()
    return _save(fig, path, fingerprint)


def timeline_figure(timeline: Timeline, path: str | Path,
                    fingerprint: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name in sorted(timeline.series):
        ax.plot(timeline.steps, timeline.series[name], marker="o",
                markersize=3, label=name)
        acq = timeline.acquisition[name]
        if acq is not None:
            ax.axvline(acq, linestyle=":", alpha=0.4)
    ax.axhline(timeline.threshold, color="gray", linestyle="--",
               label=f"acquisition ({timeline.threshold})")
    ax.set_xlabel("training step")
    ax.set_ylabel("probe score")
    ax.set_ylim(0, 1.02)
    ax.set_title("probe scores over training")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path, fingerprint)


def gap_table_csv(rows: list[dict]) -> str:
    """Fidelity rows (instance, method, pgi, pgu) as CSV text."""
    lines = ["instance,method,pgi,pgu"]
    for r in rows:
        lines.append(f"{r['instance']},{r['method']},{r['pgi']!r},{r['pgu']!r}")
    return "\n".join(lines) + "\n"


def latency_table_csv(stats: list[LatencyStats]) -> str:
    lines = ["method,n_instances,median_ms,p95_ms,mean_ms"]
    for s in stats:
        lines.append(f"{s.method},{s.n_instances},{s.median_ms!r},"
                     f"{s.p95_ms!r},{s.mean_ms!r}")
    return "\n".join(lines) + "\n"
