"""Figures for analysis reports and mode comparisons (non-interactive)."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_comparison", "plot_reports"]

_COLOURS = {"Terminating": "tab:green", "Unknown": "tab:orange", "error": "tab:red"}


def _metric(rows: Sequence[dict[str, Any]], key: str) -> str:
    return key if any(key in r for r in rows) else "cegis_iters"


def plot_comparison(table: dict[str, Any], out_dir: str | Path) -> list[Path]:
    """One bar per (program, mode), coloured by verdict.  Bars show wall time
    when the table carries timings and CEGIS iterations otherwise."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = table["rows"]
    programs = list(dict.fromkeys(r["program"] for r in rows))
    modes = table["modes"]
    key = _metric(rows, "wall_ms")
    wide = 0.45 * len(programs) * max(1, len(modes))
    fig, ax = plt.subplots(figsize=(min(16.0, max(6.0, wide)), 5))
    width = 0.8 / max(1, len(modes))
    for j, mode in enumerate(modes):
        for i, prog in enumerate(programs):
            match = [r for r in rows if r["program"] == prog and r["mode"] == mode]
            if not match:
                continue
            r = match[0]
            ax.bar(i + j * width, r.get(key, 0) or 0, width,
                   color=_COLOURS.get(r["verdict"], "grey"), edgecolor="black",
                   hatch=["", "//", ".."][j % 3])
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(programs))])
    ax.set_xticklabels([p.removesuffix(".tw") for p in programs], rotation=45, ha="right")
    ax.set_ylabel("wall time (ms)" if key == "wall_ms" else "CEGIS iterations")
    ax.set_title("modes: " + ", ".join(f"{m} ({['plain', 'hatched', 'dotted'][k % 3]})"
                                       for k, m in enumerate(modes)))
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in _COLOURS.values()]
    ax.legend(handles, list(_COLOURS), loc="upper right")
    fig.tight_layout()
    path = out / "comparison.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return [path]


def plot_reports(reports: Sequence[dict[str, Any]], out_dir: str | Path) -> list[Path]:
    """Per report, CEGIS iterations of every scheduled group."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, rep in enumerate(reports):
        groups = rep["schedule"]
        fig, ax = plt.subplots(figsize=(max(5.0, 0.6 * len(groups) + 2), 4))
        labels = ["\n".join(g["predicates"]) for g in groups]
        ax.bar(range(len(groups)), [g["iterations"] for g in groups],
               color=["tab:green" if g["status"] == "solved" else "tab:orange" for g in groups],
               edgecolor="black")
        ax.set_xticks(range(len(groups)))
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_ylabel("CEGIS iterations")
        ax.set_title(f"{rep['program']} [{rep['config']['mode']}]: {rep['verdict']}")
        fig.tight_layout()
        stem = Path(rep["program"]).stem or "program"
        path = out / f"{k:02d}_{stem}_{rep['config']['mode']}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths
