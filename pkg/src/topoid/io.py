"""File formats: network and Markov JSON, trajectory CSV.

Matrices are written row-major as flat lists next to their shape. Floats
use Python's shortest round-trip representation, so a write/read cycle is
lossless.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, UsageError
from .lti import MarkovSequence, Network, StateSpaceSystem, assemble_network


def _flat(X) -> list[float]:
    return [float(v) for v in np.asarray(X, dtype=float).ravel()]


def _reshape(data, rows, cols, name) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.size != rows * cols:
        raise DimensionMismatch(f"{name} has {arr.size} entries, expected {rows}x{cols}")
    return arr.reshape(rows, cols)


def network_to_dict(net: Network) -> dict:
    return {
        "nodes": [
            {"n": nd.n, "m": nd.m, "p": nd.p, "A": _flat(nd.A), "B": _flat(nd.B), "C": _flat(nd.C)}
            for nd in net.nodes
        ],
        "Q": {
            "rows": net.Q.shape[0], "cols": net.Q.shape[1], "data": _flat(net.Q),
            "row_blocks": net.m_sizes, "col_blocks": net.p_sizes,
        },
        "R": {"rows": net.R.shape[0], "cols": net.R.shape[1], "data": _flat(net.R), "row_blocks": net.m_sizes},
        "S": {"rows": net.S.shape[0], "cols": net.S.shape[1], "data": _flat(net.S), "col_blocks": net.p_sizes},
    }


def network_from_dict(d: dict) -> Network:
    try:
        nodes = []
        for i, nd in enumerate(d["nodes"]):
            n, m, p = int(nd["n"]), int(nd["m"]), int(nd["p"])
            nodes.append(
                StateSpaceSystem(
                    _reshape(nd["A"], n, n, f"node {i} A"),
                    _reshape(nd["B"], n, m, f"node {i} B"),
                    _reshape(nd["C"], p, n, f"node {i} C"),
                )
            )
        mats = {}
        for key in ("Q", "R", "S"):
            e = d[key]
            mats[key] = _reshape(e["data"], int(e["rows"]), int(e["cols"]), key)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed network document: {exc!r}") from exc
    net = assemble_network(nodes, mats["Q"], mats["R"], mats["S"])
    qb = d["Q"]
    if "row_blocks" in qb and list(qb["row_blocks"]) != net.m_sizes:
        raise DimensionMismatch(f"Q row blocks {qb['row_blocks']} disagree with node inputs {net.m_sizes}")
    if "col_blocks" in qb and list(qb["col_blocks"]) != net.p_sizes:
        raise DimensionMismatch(f"Q column blocks {qb['col_blocks']} disagree with node outputs {net.p_sizes}")
    return net


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def save_network(net: Network, path) -> None:
    dump_json(network_to_dict(net), path)


def load_network(path) -> Network:
    return network_from_dict(load_json(path))


def markov_to_dict(seq: MarkovSequence) -> dict:
    return {"p": seq.p, "m": seq.m, "r": seq.r, "params": [_flat(M) for M in seq]}


def markov_from_dict(d: dict) -> MarkovSequence:
    p, m, r = int(d["p"]), int(d["m"]), int(d["r"])
    if len(d["params"]) != r + 1:
        raise DimensionMismatch(f"expected {r + 1} Markov parameters, got {len(d['params'])}")
    return MarkovSequence(np.stack([_reshape(M, p, m, f"M_{k}") for k, M in enumerate(d["params"])]))


def trajectory_to_csv(u, y) -> str:
    u = np.asarray(u, dtype=float).reshape(len(u), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"u_{k + 1}" for k in range(u.shape[1])] + [f"y_{k + 1}" for k in range(y.shape[1])])
    for t in range(u.shape[0]):
        w.writerow([t] + [repr(float(v)) for v in u[t]] + [repr(float(v)) for v in y[t]])
    return buf.getvalue()


def write_trajectory(path, u, y) -> None:
    Path(path).write_text(trajectory_to_csv(u, y))


def read_trajectory(path):
    """Return ``(u, y)``; ``y`` has zero columns when the file carries inputs only."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:1] != ["t"]:
        raise UsageError(f"{path}: expected a header starting with 't'")
    header = rows[0]
    ucols = [k for k, h in enumerate(header) if h.startswith("u_")]
    ycols = [k for k, h in enumerate(header) if h.startswith("y_")]
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float).reshape(-1, len(header))
    return data[:, ucols], data[:, ycols]
