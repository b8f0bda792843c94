"""Trace and metrics output: CSV for plotting, JSON for machine diffing.

Floats are written with 17 significant digits so every value round-trips
exactly; identical runs therefore produce byte-identical files.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import ContractError

__all__ = [
    "format_float", "write_trace_csv", "write_trace_json",
    "write_metrics_json", "read_trace_csv", "read_trace_json",
    "write_compare_csv",
]


def format_float(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_trace_csv(path, trace):
    names = trace.column_names()
    mat = trace.to_matrix()
    if mat.shape[1] != len(names):
        raise ContractError("trace column count does not match header")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in mat:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def write_trace_json(path, trace):
    payload = {
        "columns": trace.column_names(),
        "meta": {k: v for k, v in trace.meta.items()},
        "data": [[float(v) for v in row] for row in trace.to_matrix()],
    }
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def metrics_dict(metrics, trace=None):
    p = len(metrics.gain_reduction)
    out = {
        "settling_time": None if math.isnan(metrics.settling_time)
        else metrics.settling_time,
        "final_norm": metrics.final_norm,
        "gain_reduction": [float(v) for v in metrics.gain_reduction],
        "final_gain_gap": [float(v) for v in metrics.final_gain_gap],
        "vc_max_step_increase": metrics.vc_max_step_increase,
        "sup_state_norm": metrics.sup_state_norm,
    }
    if trace is not None:
        out["meta"] = dict(trace.meta)
        out["samples"] = int(len(trace))
    return out


def write_metrics_json(path, metrics, trace=None):
    with open(path, "w", newline="") as fh:
        json.dump(metrics_dict(metrics, trace), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_trace_csv(path):
    """(column names, value matrix); exact inverse of write_trace_csv."""
    with open(path, newline="") as fh:
        names = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    return names, np.asarray(rows)


def read_trace_json(path):
    with open(path) as fh:
        payload = json.load(fh)
    return payload["columns"], np.asarray(payload["data"])


def write_compare_csv(path, rows):
    """Side-by-side metrics table; ``rows`` are (name, variant, metrics)."""
    if not rows:
        raise ContractError("nothing to compare")
    p = len(rows[0][2].gain_reduction)
    header = ["config", "variant"] + rows[0][2].row_names(p)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for name, variant, metrics in rows:
            vals = [name, variant] + [format_float(v) for v in metrics.row()]
            fh.write(",".join(vals) + "\n")
