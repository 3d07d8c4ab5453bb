"""Topology extraction, comparison metrics and example network generators.

Nodes are indexed from 0. An edge ``(j, i)`` points from node ``j`` to node
``i`` and exists iff block ``Q[i, j]`` is nonzero.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import PartitionMismatch
from .lti import Network, StateSpaceSystem, assemble_network


@dataclass
class Topology:
    N: int
    edges: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    m_sizes: tuple[int, ...] = ()
    p_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.m_sizes:
            self.m_sizes = (1,) * self.N
        if not self.p_sizes:
            self.p_sizes = (1,) * self.N
        self.m_sizes = tuple(int(v) for v in self.m_sizes)
        self.p_sizes = tuple(int(v) for v in self.p_sizes)

    @property
    def edge_set(self) -> set[tuple[int, int]]:
        return set(self.edges)

    def to_dense(self) -> np.ndarray:
        mo = np.concatenate([[0], np.cumsum(self.m_sizes)]).astype(int)
        po = np.concatenate([[0], np.cumsum(self.p_sizes)]).astype(int)
        Q = np.zeros((mo[-1], po[-1]))
        for (j, i), W in self.edges.items():
            Q[mo[i] : mo[i + 1], po[j] : po[j + 1]] = W
        return Q

    def to_edge_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["from", "to", "weight_maxabs"])
        for (j, i) in sorted(self.edges):
            w.writerow([j, i, repr(float(np.max(np.abs(self.edges[(j, i)]))))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "m_sizes": list(self.m_sizes),
            "p_sizes": list(self.p_sizes),
            "edges": [
                {"from": j, "to": i, "weight": self.edges[(j, i)].tolist()} for (j, i) in sorted(self.edges)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> Topology:
        edges = {(e["from"], e["to"]): np.atleast_2d(np.asarray(e["weight"], dtype=float)) for e in d["edges"]}
        return cls(d["N"], edges, tuple(d["m_sizes"]), tuple(d["p_sizes"]))


def extract_topology(Q, m_sizes=None, p_sizes=None, tol: float = 0.0) -> Topology:
    """Edges for every block of ``Q`` whose max-abs entry exceeds ``tol``.

    Without partition sizes every node is taken to be SISO.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    m_sizes = tuple(m_sizes) if m_sizes is not None else (1,) * Q.shape[0]
    p_sizes = tuple(p_sizes) if p_sizes is not None else (1,) * Q.shape[1]
    if len(m_sizes) != len(p_sizes):
        raise PartitionMismatch(f"{len(m_sizes)} row blocks but {len(p_sizes)} column blocks")
    if Q.shape != (sum(m_sizes), sum(p_sizes)):
        raise PartitionMismatch(f"Q has shape {Q.shape}, partition implies {(sum(m_sizes), sum(p_sizes))}")
    mo = np.concatenate([[0], np.cumsum(m_sizes)]).astype(int)
    po = np.concatenate([[0], np.cumsum(p_sizes)]).astype(int)
    N = len(m_sizes)
    edges = {}
    for i in range(N):
        for j in range(N):
            blk = Q[mo[i] : mo[i + 1], po[j] : po[j + 1]]
            if blk.size and np.max(np.abs(blk)) > tol:
                edges[(j, i)] = blk.copy()
    return Topology(N, edges, m_sizes, p_sizes)


def network_topology(net: Network, tol: float = 0.0) -> Topology:
    return extract_topology(net.Q, net.m_sizes, net.p_sizes, tol)


def compare(truth: Topology, estimate: Topology) -> dict:
    """Edge-set differences and weight error of ``estimate`` against ``truth``."""
    if truth.N != estimate.N or truth.m_sizes != estimate.m_sizes or truth.p_sizes != estimate.p_sizes:
        raise PartitionMismatch(
            f"cannot compare N={truth.N} {truth.m_sizes}x{truth.p_sizes} "
            f"with N={estimate.N} {estimate.m_sizes}x{estimate.p_sizes}"
        )
    a, b = truth.edge_set, estimate.edge_set
    common = a & b
    werr = max((float(np.max(np.abs(truth.edges[e] - estimate.edges[e]))) for e in common), default=0.0)
    return {
        "missing_edges": sorted(a - b),
        "spurious_edges": sorted(b - a),
        "precision": len(common) / len(b) if b else 1.0,
        "recall": len(common) / len(a) if a else 1.0,
        "max_weight_error": werr,
    }


def oscillator_angles(N: int) -> np.ndarray:
    return (0.2 + 0.01 * np.arange(1, N + 1)) * np.pi


def oscillator_node(theta: float) -> StateSpaceSystem:
    c, s = np.cos(theta), np.sin(theta)
    return StateSpaceSystem([[c, s], [-s, c]], [[1.0], [0.0]], [[1.0, 0.0]])


def ring_interconnection(N: int, diffusive: bool = True) -> np.ndarray:
    """Cycle with self-loops.

    ``diffusive=True`` encodes ``v_i = 1/2 sum_{j in N_i} (w_j - w_i)``, i.e.
    ``-1`` on the diagonal and ``1/2`` to both ring neighbours.
    ``diffusive=False`` gives the sign-flipped matrix (``1`` / ``-1/2``).
    """
    Q = np.zeros((N, N))
    for i in range(N):
        Q[i, (i - 1) % N] += 0.5
        Q[i, (i + 1) % N] += 0.5
        Q[i, i] = -1.0
    return Q if diffusive else -Q


def make_oscillator_ring(N: int = 10, *, excite_all: bool = False, diffusive: bool = True) -> Network:
    """Ring of rotation-matrix oscillators with ``theta_i = (0.2 + 0.01 i) pi``.

    The external input drives node 0 only unless ``excite_all``; every node
    output is measured.
    """
    if N < 3:
        raise ValueError("a ring needs N >= 3")
    nodes = [oscillator_node(t) for t in oscillator_angles(N)]
    R = np.eye(N) if excite_all else np.eye(N)[:, :1]
    return assemble_network(nodes, ring_interconnection(N, diffusive), R, np.eye(N))


def example12_nodes() -> list[StateSpaceSystem]:
    integrator = StateSpaceSystem([[0.0]], [[1.0]], [[1.0]])
    chain = StateSpaceSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]])
    return [integrator, chain]


def make_example12(Q=None, *, R=None, S=None) -> Network:
    """Integrator feeding a double-integrator chain; input at node 0, output at node 1."""
    Q = np.array([[0.3, -0.4], [0.8, 0.5]]) if Q is None else Q
    R = np.array([[1.0], [0.0]]) if R is None else R
    S = np.array([[0.0, 1.0]]) if S is None else S
    return assemble_network(example12_nodes(), Q, R, S)


def example12_transfer(Q, z: complex) -> complex:
    q11, q12, q21, q22 = np.asarray(Q, dtype=float).ravel()
    return q21 / (z**3 - q11 * z**2 - q22 * z + q11 * q22 - q12 * q21)


def make_integrator_network(Q, R=None, S=None) -> Network:
    """Homogeneous network of scalar delays ``x(t+1) = v(t)``, ``w = x``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    N = Q.shape[0]
    node = StateSpaceSystem([[0.0]], [[1.0]], [[1.0]])
    R = np.eye(N) if R is None else R
    S = np.eye(N) if S is None else S
    return assemble_network([node] * N, Q, R, S)
