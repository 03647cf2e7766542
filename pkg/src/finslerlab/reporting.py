"""Versioned CSV tables, summary records and gnuplot script text."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

SCHEMAS = {
    "curvature": ("x1", "x2", "x3", "y1", "y2", "y3", "F", "Ric", "S", "Sdot", "RicN", "lambda_min", "lambda_max"),
    "trajectory": ("t", "x1", "x2", "x3", "u"),
    "mass": ("t", "mass", "min_u", "max_u"),
    "flow": ("t", "x1", "x2", "x3", "param", "value"),
    "bounds_trace": ("t", "K1", "K2", "K3", "K4"),
    "margins": ("check", "t", "x1", "x2", "x3", "margin", "pass"),
    "harnack": ("check", "s", "t", "x1", "x2", "x3", "y1", "y2", "y3", "distance_or_B", "margin", "pass"),
}


def fmt(v) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _columns(schema: str, n: int):
    cols = SCHEMAS[schema]
    drop = {f"{p}3" for p in ("x", "y")} if n == 2 else set()
    return [c for c in cols if c not in drop]


def write_csv(path, schema: str, n: int, rows) -> Path:
    """Write ``rows`` under a ``# schema=<name>/v<k>`` line and a mandatory header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = _columns(schema, n)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema={schema}/v{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            if len(r) != len(cols):
                raise ValueError(f"{schema} row has {len(r)} fields, expected {len(cols)}")
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    """Return ``(schema, header, rows)`` of a file written by :func:`write_csv`."""
    with Path(path).open() as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise ValueError(f"{path}: missing schema line")
        schema = first.split("=", 1)[1]
        reader = csv.reader(fh)
        header = next(reader)
        return schema, header, [row for row in reader]


# ---------------------------------------------------------------------------
# row builders; they only reformat module outputs


def curvature_rows(table):
    return [
        (*x, *y, F, ric, S, Sd, rn, lo, hi)
        for x, y, F, ric, S, Sd, rn, lo, hi in zip(
            table.x.tolist(), table.y.tolist(), table.F, table.ric, table.S, table.Sdot, table.ricN,
            table.lam_min, table.lam_max,
        )
    ]


def trajectory_rows(traj, every: int = 1):
    grid = traj.grid
    X = grid.nodes()
    out = []
    for k in range(0, len(traj), every):
        u = traj.u[k].reshape(-1)
        t = float(traj.t[k])
        out.extend((t, *x, float(v)) for x, v in zip(X.tolist(), u))
    return out


def mass_rows(traj):
    return [(float(traj.t[k]), traj.mass(k), float(np.min(traj.u[k])), float(np.max(traj.u[k])))
            for k in range(len(traj))]


def flow_rows(flow, every: int = 1):
    grid = flow.grid
    X = grid.nodes().tolist()
    out = []
    for k in range(0, len(flow.metrics), every):
        params = flow.metrics[k].node_params(grid)
        t = float(flow.t[k])
        for name, vals in sorted(params.items()):
            flat = vals.reshape(grid.size, -1)
            labels = [name] if flat.shape[1] == 1 else [
                f"{name}{''.join(str(i + 1) for i in np.unravel_index(c, vals.shape[1:]))}" for c in range(flat.shape[1])
            ]
            for x, row in zip(X, flat):
                out.extend((t, *x, lab, float(v)) for lab, v in zip(labels, row))
    return out


def bounds_rows(flow):
    return [tuple(r) for r in flow.bounds_table()]


def margin_rows(report):
    """Per-time worst margins ``(t, x, margin)``."""
    return [(report.name, t, *x, m, m <= report.tol_budget) for t, x, m in report.rows]


def harnack_rows(report):
    return [(report.name, s, t, *x, *y, d, m, m <= report.tol_budget) for s, t, x, y, d, m in report.rows]


# ---------------------------------------------------------------------------
# summaries


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_summary(out_dir, summary: dict):
    """summary.json (machine-readable) and summary.txt (one line per check)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clean = _clean(summary)
    (out / "summary.json").write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")
    lines = [f"exit code: {summary.get('exit_code')}"]
    for name, rec in summary.get("checks", {}).items():
        status = rec.get("status", "PASS" if rec.get("passed") else "FAIL")
        extra = ""
        if "worst_margin" in rec:
            extra = f"  worst margin {fmt(rec['worst_margin'])} at {rec.get('worst_location')}  budget {fmt(rec.get('tol_budget'))}"
        if rec.get("error"):
            extra = f"  {rec['error']}"
        lines.append(f"{name:22s} {status}{extra}")
    if summary.get("defaulted"):
        lines.append("defaulted keys: " + ", ".join(summary["defaulted"]))
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return out / "summary.json"


def gnuplot_script(csv_name: str, png_name: str, xcol: int, ycol: int, title: str, budget=None) -> str:
    """Plot script for a margins-like CSV (comment line skipped, header used as key)."""
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        "set terminal pngcairo size 800,500",
        f"set output '{png_name}'",
        f"set title '{title}'",
        f"set xlabel 't'",
        "set ylabel 'margin'",
    ]
    plot = f"plot '{csv_name}' using {xcol}:{ycol} with points pt 7 ps 0.5"
    if budget is not None:
        plot += f", {fmt(budget)} with lines title 'budget'"
    lines.append(plot)
    return "\n".join(lines) + "\n"
