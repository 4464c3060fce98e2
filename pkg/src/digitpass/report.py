"""Report rendering: CSV tables, a plain-text summary and figures.

Every writer is deterministic: fixed float formats, LF line endings,
and PNG output with the software metadata chunk stripped so reruns of
the same training produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .evolution import GaHistory
from .featurizer import window_table
from .grouping import GroupTable
from .twopass import Report

_SAVE_KWARGS = dict(dpi=110, metadata={"Software": None})


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def write_confusion_csv(path, cm: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["true\\pred"] + [str(j) for j in range(10)])
        for i in range(10):
            w.writerow([str(i)] + [str(int(v)) for v in cm[i]])


def write_groups_csv(path, table: GroupTable, pairs: list[tuple[int, int, int]]) -> None:
    """Group table plus the qualifying pair sums that produced it."""
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["record", "labels", "mutual_confusion"])
        for gid, g in enumerate(table.groups):
            w.writerow([f"group_{gid}", " ".join(str(v) for v in g), ""])
        for i, j, s in pairs:
            w.writerow(["pair", f"{i} {j}", str(s)])


def write_ga_history_csv(path, history: GaHistory) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["generation", "member", "bitstring", "fitness", "best_so_far"])
        for rec in history.records:
            for m, (bits, fit) in enumerate(zip(rec.bitstrings, rec.fitnesses)):
                w.writerow([rec.generation, m, bits, _fmt(fit), _fmt(rec.best_fitness)])


def write_report_csv(path, report: Report) -> None:
    """One row per classifier stage, mirroring a recognition-rate table."""
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow([
            "classifier", "labels", "chromosome", "samples",
            "recognition_rate", "coarse_rate_on_same_samples", "improvement",
        ])
        w.writerow(["coarse", "0-9", "", report.total,
                    _fmt(report.coarse_accuracy), _fmt(report.coarse_accuracy), ""])
        for gid, g in enumerate(report.groups):
            w.writerow([
                f"group_{gid}", " ".join(str(v) for v in g.group), g.chromosome,
                g.routed_count, _fmt(g.routed_accuracy),
                _fmt(g.coarse_accuracy_on_routed), "",
            ])
        w.writerow(["combined", "0-9", "", report.total,
                    _fmt(report.combined_accuracy), _fmt(report.coarse_accuracy),
                    _fmt(report.improvement)])


def write_route_confusions_csv(out_dir, report: Report) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for route, cm in report.route_confusions.items():
        name = route.replace("(", "_").replace(")", "")
        path = out_dir / f"confusion_{name}.csv"
        write_confusion_csv(path, cm)
        written.append(path)
    return written


def summary_text(report: Report) -> str:
    """Human-readable recognition table."""
    lines = [
        "classifier            samples   recognition   improvement",
        f"coarse (pass 1)      {report.total:8d}      {report.coarse_accuracy:8.2%}",
    ]
    for g in report.groups:
        label = "{" + ",".join(str(v) for v in g.group) + "}"
        rate = "      n/a" if g.routed_accuracy is None else f"{g.routed_accuracy:8.2%}"
        lines.append(f"group {label:<14} {g.routed_count:8d}      {rate}")
    lines.append(
        f"combined (two-pass)  {report.total:8d}      {report.combined_accuracy:8.2%}"
        f"      {report.improvement:+.2%}"
    )
    lines.append(f"rejection rate: {report.rejection_rate:.0%}; "
                 f"blank samples skipped: {report.skipped_blank}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def render_confusion_png(path, cm: np.ndarray, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.6, 5.0))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(10))
    ax.set_yticks(range(10))
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    vmax = cm.max() if cm.max() > 0 else 1
    for i in range(10):
        for j in range(10):
            if cm[i, j]:
                color = "white" if cm[i, j] > 0.6 * vmax else "black"
                ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                        color=color, fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_fitness_png(path, histories: dict[str, GaHistory]) -> None:
    """Mean and best-so-far fitness per generation, one panel per group."""
    n = max(1, len(histories))
    fig, axes = plt.subplots(1, n, figsize=(4.4 * n, 3.4), squeeze=False)
    for ax, (key, history) in zip(axes[0], sorted(histories.items())):
        gens = [r.generation for r in history.records]
        ax.plot(gens, [r.mean_fitness for r in history.records], "o-", label="population mean")
        ax.plot(gens, [r.best_fitness for r in history.records], "s--", label="best so far")
        ax.set_title(f"group {{{key.replace('-', ',')}}}")
        ax.set_xlabel("generation")
        ax.set_ylabel("fitness")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    if not histories:
        axes[0][0].set_axis_off()
        axes[0][0].text(0.5, 0.5, "no groups formed", ha="center", va="center")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_synth_preview_png(path, samples) -> None:
    """First rendering of each class, raw canvas (pre-normalization)."""
    firsts = {}
    for s in samples:
        firsts.setdefault(s.label, s)
        if len(firsts) == 10:
            break
    fig, axes = plt.subplots(2, 5, figsize=(7.5, 3.4))
    for label, ax in enumerate(axes.ravel()):
        ax.set_axis_off()
        if label in firsts:
            img = firsts[label].image
            pixels = img.bits if hasattr(img, "bits") else img.pixels
            ax.imshow(pixels, cmap="gray_r", interpolation="nearest")
            ax.set_title(str(label), fontsize=9)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_windows_png(path, selections: dict[str, str]) -> None:
    """Selected windows per group: chosen rectangles filled, others dashed.

    selections maps group key -> 9-bit string."""
    table = window_table()
    n = max(1, len(selections))
    fig, axes = plt.subplots(1, n, figsize=(3.6 * n, 3.8), squeeze=False)
    for ax, (key, bits) in zip(axes[0], sorted(selections.items())):
        ax.set_xlim(0, 32)
        ax.set_ylim(32, 0)
        ax.set_aspect("equal")
        ax.set_title(f"group {{{key.replace('-', ',')}}}  {bits}", fontsize=9)
        for win in table:
            chosen = bits[win.index] == "1"
            if chosen:
                ax.add_patch(Rectangle((win.x0, win.y0), 16, 16,
                                       facecolor="tab:blue", alpha=0.25, edgecolor="tab:blue"))
            ax.add_patch(Rectangle((win.x0, win.y0), 16, 16, fill=False,
                                   linestyle="-" if chosen else ":",
                                   edgecolor="tab:blue" if chosen else "gray",
                                   linewidth=1.4 if chosen else 0.8))
            ax.text(win.x0 + 1.0, win.y0 + 2.6, str(win.index), fontsize=7,
                    color="tab:blue" if chosen else "gray")
        ax.set_xticks([0, 8, 16, 24, 32])
        ax.set_yticks([0, 8, 16, 24, 32])
    if not selections:
        axes[0][0].set_axis_off()
        axes[0][0].text(0.5, 0.5, "no groups formed", ha="center", va="center")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
