"""File formats: columnar CSV with a JSON metadata sidecar, JSON and JSON lines.

Floats are written with 17 significant digits so files round-trip exactly and
repeated runs with the same seed produce identical bytes.
"""
import csv
import json
import os

import numpy as np

FLOAT_FMT = "%.17g"


def _ensure_parent(path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def sidecar_path(csv_path):
    root, _ = os.path.splitext(csv_path)
    return root + ".meta.json"


def write_json(path, obj):
    _ensure_parent(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_columns(path, columns, meta):
    """Write equal-length 1-d arrays as CSV columns plus a metadata sidecar."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")
    write_json(sidecar_path(path), {**meta, "columns": names, "rows": int(data.shape[0])})


def read_columns(path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    cols = {k: data[:, i] for i, k in enumerate(header)}
    meta = read_json(sidecar_path(path)) if os.path.exists(sidecar_path(path)) else {}
    return cols, meta


def _beta_columns(points, names=None):
    p = points.shape[1]
    names = names or [f"beta_{j}" for j in range(p)]
    return {n: points[:, j] for j, n in enumerate(names)}


def write_weighted_sample(path, ws, meta=None, names=None):
    cols = _beta_columns(ws.points, names)
    cols["log_weight"] = ws.log_weights
    info = {"kind": "weighted_sample", "N": ws.N, "log_evidence": ws.log_evidence,
            "ess": ws.ess, "ef": ws.ef, **_jsonable(ws.meta), **(meta or {})}
    write_columns(path, cols, info)


def write_chain_trace(path, trace, meta=None, names=None):
    cols = _beta_columns(trace.states, names)
    cols["log_posterior"] = trace.log_posterior
    tuning = {k: v for k, v in trace.tuning.items() if not isinstance(v, np.ndarray) or v.size <= 1000}
    info = {"kind": "chain_trace", "T": int(trace.states.shape[0]), "burn_in": trace.burn_in,
            "acceptance_rate": trace.acceptance_rate, "tuning": _jsonable(tuning), **(meta or {})}
    write_columns(path, cols, info)


def write_jsonl(path, records):
    _ensure_parent(path)
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(_jsonable(r), sort_keys=True) + "\n")


def write_rows(path, header, rows):
    _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.random.SeedSequence):
        return {"entropy": obj.entropy, "spawn_key": list(obj.spawn_key)}
    return obj
