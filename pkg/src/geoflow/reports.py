"""Report serialization and plot emission for experiment runs.

report.json is deterministic byte-for-byte for a given config and seed:
keys are sorted, floats go through repr, and anything timing-related lives
in the run_meta.json sidecar instead.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

matplotlib.rcParams["svg.hashsalt"] = "geoflow"

PLOT_KINDS = ("poincare-scatter", "trace-sweep", "twist-r-profile")


def plain(obj):
    """Recursively convert numpy scalars/arrays so json emits stable bytes."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_report(report: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    payload = json.dumps(plain(report), sort_keys=True, indent=2)
    path.write_text(payload + "\n")
    return path


def write_run_meta(meta: dict, out_dir) -> Path:
    path = Path(out_dir) / "run_meta.json"
    path.write_text(json.dumps(plain(meta), sort_keys=True, indent=2) + "\n")
    return path


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _render_scatter(series, path):
    rows = np.asarray(series["rows"], dtype=float).reshape(-1, 2)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if len(rows):
        ax.plot(rows[:, 0], rows[:, 1], ".", ms=2.0, color="tab:blue")
    ax.set_xlabel(series["columns"][0])
    ax.set_ylabel(series["columns"][1])
    ax.set_title(series["name"])
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _render_sweep(series, path):
    rows = np.asarray(series["rows"], dtype=float).reshape(-1, 2)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if len(rows):
        ax.plot(rows[:, 0], rows[:, 1], "-o", ms=3.0, color="tab:blue")
    ax.set_xlabel(series["columns"][0])
    ax.set_ylabel(series["columns"][1])
    ax.set_title(series["name"])
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _render_r_profile(series, path):
    rows = np.asarray(series["rows"], dtype=float).reshape(-1, 2)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if len(rows):
        ax.plot(rows[:, 0], rows[:, 1], lw=0.7, color="tab:blue")
    marks = [int(i) for i in series.get("jump_indices", [])]
    if marks and len(rows):
        ax.plot(
            rows[marks, 0], rows[marks, 1], "x", ms=5.0, color="tab:red",
            label="jumps",
        )
        ax.legend(loc="upper left")
    ax.set_xlabel(series["columns"][0])
    ax.set_ylabel(series["columns"][1])
    ax.set_title(series["name"])
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


_RENDERERS = {
    "poincare-scatter": _render_scatter,
    "trace-sweep": _render_sweep,
    "twist-r-profile": _render_r_profile,
}


def emit_plot_data(report: dict, target) -> tuple[list, list]:
    """CSV plus a vector graphic per known series; unknown kinds are skipped.

    Returns (written paths, skipped series names).
    """
    target = Path(target)
    target.mkdir(parents=True, exist_ok=True)
    written, skipped = [], []
    for series in report.get("results", {}).get("series", []):
        name = series.get("name", "series")
        kind = series.get("kind")
        if kind not in _RENDERERS:
            skipped.append(name)
            warnings.warn(f"unknown plot series kind {kind!r}: skipping {name}")
            continue
        csv_path = target / f"{name}.csv"
        _write_csv(csv_path, series["columns"], series["rows"])
        svg_path = target / f"{name}.svg"
        _RENDERERS[kind](series, svg_path)
        written.extend([csv_path, svg_path])
    return written, skipped
