"""Topological identifiability tests.

All tests reduce to constant kernels of rational matrices: a strictly proper
``T(z)`` annihilates a constant vector ``w`` iff every Markov coefficient
does, so the constant kernel is the null space of the stacked coefficients
once enough of them are stacked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ._linalg import null_space, numerical_rank, rank_tolerance
from .errors import InsufficientDepth, NotHomogeneousSiso, PreconditionViolated, RankDeficientS
from .lti import MarkovSequence, Network, StateSpaceSystem, markov_exact, system_markov


class Method(str, enum.Enum):
    GENERAL = "general"
    FULL_EXCITATION = "full_excitation"
    HOMOGENEOUS_SISO = "homogeneous_siso"


@dataclass
class KernelTestReport:
    node_pair: tuple[int, ...]
    stack_depth: int
    kernel_dim: int
    kernel_basis: np.ndarray
    singular_values: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.kernel_dim == 0

    def to_dict(self) -> dict:
        return {
            "node_pair": list(self.node_pair),
            "stack_depth": self.stack_depth,
            "kernel_dim": self.kernel_dim,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass
class RankFinding:
    name: str
    rank: int
    required: int
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "rank": self.rank, "required": self.required, "passed": self.passed}


@dataclass
class IdentifiabilityVerdict:
    """Outcome of one identifiability test.

    ``identifiable`` is ``None`` when the test ran but is only a necessary
    condition under the network's rank regime and that condition passed.
    """

    identifiable: bool | None
    method: Method
    reports: list = field(default_factory=list)
    caveats: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.identifiable is False and not any(not r.passed for r in self.reports):
            raise ValueError("a negative verdict must carry a failing report")

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "identifiable": self.identifiable,
            "reports": [r.to_dict() for r in self.reports],
            "caveats": list(self.caveats),
        }


def _stack(markov_stack) -> np.ndarray:
    """Stack coefficients into one matrix, damping block rows with norm above one.

    Scaling a block row leaves the null space unchanged, but without it the
    late coefficients of an unstable loop dominate the rank tolerance.
    """
    if isinstance(markov_stack, MarkovSequence):
        markov_stack = markov_stack.params
    arr = np.asarray(markov_stack, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    if arr.ndim == 2:
        return arr
    norms = np.linalg.norm(arr, axis=(1, 2))
    arr = arr / np.maximum(norms, 1.0)[:, None, None]
    return arr.reshape(-1, arr.shape[2])


def constant_kernel(markov_stack) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``col(M_0, ..., M_r)``."""
    basis, _ = null_space(_stack(markov_stack))
    return basis


def _kernel_report(pair, markov_stack, depth: int) -> KernelTestReport:
    stack = _stack(markov_stack)
    basis, s = null_space(stack)
    tol = float(rank_tolerance(s[0], stack.shape)) if s.size else 0.0
    return KernelTestReport(tuple(pair), depth, basis.shape[1], basis, [float(v) for v in s], tol)


def kron_markov(seq_a: MarkovSequence, seq_b: MarkovSequence, depth: int) -> MarkovSequence:
    """Coefficients of ``T_a(z) kron T_b(z)`` for two strictly proper transfers.

    With ``T_a = sum_i A_i z^{-i-1}`` and ``T_b = sum_j B_j z^{-j-1}`` the
    product coefficient of ``z^{-k-2}`` is ``sum_{i+j=k} A_i kron B_j``;
    entries ``k = 0 .. depth-1`` are returned.
    """
    if depth < 1:
        raise InsufficientDepth("depth must be at least 1")
    if len(seq_a) < depth or len(seq_b) < depth:
        raise InsufficientDepth(f"need {depth} coefficients, got {len(seq_a)} and {len(seq_b)}")
    a, b = seq_a.params, seq_b.params
    out = np.zeros((depth, a.shape[1] * b.shape[1], a.shape[2] * b.shape[2]))
    for k in range(depth):
        for i in range(k + 1):
            out[k] += np.kron(a[i], b[k - i])
    return MarkovSequence(out)


def kron_depth(deg_a: int, shape_a: tuple[int, int], deg_b: int, shape_b: tuple[int, int]) -> int:
    """Stacking depth for ``T_a kron T_b``: the state dimension of the realization
    of ``(T_a kron I)(I kron T_b)``."""
    return deg_a * shape_b[0] + shape_a[1] * deg_b


def _full_column_rank(X) -> bool:
    return numerical_rank(X) == np.shape(X)[1]


def _full_row_rank(X) -> bool:
    return numerical_rank(X) == np.shape(X)[0]


def check_identifiability_general(net: Network, depth_override: int | None = None) -> IdentifiabilityVerdict:
    """Per-node constant-kernel test on ``G_i(z) kron H_Q(z)^T``.

    Requires full column rank of ``S``. The verdict certifies identifiability
    at the supplied ``Q`` only.
    """
    if not _full_column_rank(net.S):
        raise RankDeficientS(f"S has rank {numerical_rank(net.S)} < {net.S.shape[1]}; the per-node test does not apply")
    n, m = net.n, net.m
    depths = [depth_override or kron_depth(nd.n, (nd.p, nd.m), n, (m, net.C.shape[0])) for nd in net.nodes]
    HT = markov_exact(net, max(depths) - 1).transposed()
    reports = []
    for i, nd in enumerate(net.nodes):
        d = depths[i]
        Gi = system_markov(nd, d)
        stack = kron_markov(Gi, HT.truncated(d - 1), d)
        reports.append(_kernel_report((i,), stack, d))
    caveats = ["certifies identifiability at the given interconnection matrix only"]
    if depth_override is None:
        caveats.append("stacking depth from the realization-dimension bound n_i*m + m_i*n")
    ok = all(r.passed for r in reports)
    return IdentifiabilityVerdict(ok, Method.GENERAL, reports, caveats)


def check_identifiability_full_excitation(net: Network) -> IdentifiabilityVerdict:
    """Interconnection-free test on ``G_i(z)^T kron G_j(z)`` for all node pairs.

    Necessary for identifiability; also sufficient when ``S`` has full
    column rank and ``R`` full row rank.
    """
    sufficient = _full_column_rank(net.S) and _full_row_rank(net.R)
    reports = []
    for i, ni in enumerate(net.nodes):
        for j, nj in enumerate(net.nodes):
            d = kron_depth(ni.n, (ni.m, ni.p), nj.n, (nj.p, nj.m))
            GiT = system_markov(ni, d).transposed()
            Gj = system_markov(nj, d)
            reports.append(_kernel_report((i, j), kron_markov(GiT, Gj, d), d))
    ok = all(r.passed for r in reports)
    caveats = []
    if sufficient:
        verdict = ok
    else:
        caveats.append("necessary condition only: S lacks full column rank or R lacks full row rank")
        verdict = False if not ok else None
    return IdentifiabilityVerdict(verdict, Method.FULL_EXCITATION, reports, caveats)


def output_controllability_matrix(sys: StateSpaceSystem) -> np.ndarray:
    return np.hstack(list(system_markov(sys, sys.n).params)) if sys.n else np.zeros((sys.p, 0))


def output_controllability(sys: StateSpaceSystem) -> bool:
    """Full row rank of ``(CB, CAB, ..., CA^{n-1}B)``."""
    return numerical_rank(output_controllability_matrix(sys)) == sys.p


def controllability_matrix(A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    blocks, X = [], B
    for _ in range(A.shape[0]):
        blocks.append(X)
        X = A @ X
    return np.hstack(blocks)


def observability_matrix(C, A) -> np.ndarray:
    return controllability_matrix(np.asarray(A).T, np.asarray(C).T).T


def is_homogeneous_siso(net: Network) -> bool:
    first = net.nodes[0]
    return all(nd.m == 1 and nd.p == 1 for nd in net.nodes) and all(
        first.same_realization(nd) for nd in net.nodes[1:]
    )


def _require_homogeneous_siso(net: Network, assume_homogeneous: bool):
    if any(nd.m != 1 or nd.p != 1 for nd in net.nodes):
        raise NotHomogeneousSiso("all nodes must be single-input single-output")
    if not assume_homogeneous and not is_homogeneous_siso(net):
        raise NotHomogeneousSiso("node realizations differ; pass assume_homogeneous=True to assert homogeneity")


def check_homogeneous_siso(net: Network, assume_homogeneous: bool = False) -> IdentifiabilityVerdict:
    """Exact characterization for networks of identical SISO nodes.

    Identifiable iff the node transfer is nonzero and either ``rank S = N``
    with ``(Q, R)`` controllable, or ``rank R = N`` with ``(S, Q)`` observable.
    """
    _require_homogeneous_siso(net, assume_homogeneous)
    N = net.N
    node = net.nodes[0]
    g0 = system_markov(node, node.n).params.ravel()
    g_nonzero = bool(np.any(g0 != 0))
    rS, rR = numerical_rank(net.S), numerical_rank(net.R)
    rc = numerical_rank(controllability_matrix(net.Q, net.R))
    ro = numerical_rank(observability_matrix(net.S, net.Q))
    findings = [
        RankFinding("node transfer nonzero", int(g_nonzero), 1, g_nonzero),
        RankFinding("rank S", rS, N, rS == N),
        RankFinding("rank R", rR, N, rR == N),
        RankFinding("(Q, R) controllable", rc, N, rc == N),
        RankFinding("(S, Q) observable", ro, N, ro == N),
    ]
    measured = rS == N and rc == N
    excited = rR == N and ro == N
    ok = g_nonzero and (measured or excited)
    caveats = []
    if not g_nonzero:
        caveats.append("node transfer is identically zero, so the network transfer vanishes for every Q")
    if rS < N and rR < N:
        caveats.append(
            "rank S < N and rank R < N: identical SISO nodes need every node measured or every node excited"
        )
    return IdentifiabilityVerdict(ok, Method.HOMOGENEOUS_SISO, findings, caveats)


def construct_indistinguishable(net: Network, assume_homogeneous: bool = False) -> np.ndarray | None:
    """Interconnection ``Q_bar != Q`` with the same network transfer.

    For identical SISO nodes with ``rank S < N`` and ``rank R < N`` take
    ``S v1 = 0``, ``v2^T R = 0`` and ``T = I + v1 v2^T``; then
    ``Q_bar = T^{-1} Q T``. Returns ``None`` if every kernel pair yields
    ``Q_bar == Q`` (``v1`` is then an eigenvector of ``Q`` inside ``ker S``).
    """
    _require_homogeneous_siso(net, assume_homogeneous)
    N = net.N
    if numerical_rank(net.S) >= N or numerical_rank(net.R) >= N:
        raise PreconditionViolated("needs rank S < N and rank R < N")
    ker_S, _ = null_space(net.S)
    ker_RT, _ = null_space(net.R.T)
    Q = net.Q
    scale = max(1.0, float(np.max(np.abs(Q))))
    for a in range(ker_S.shape[1]):
        for b in range(ker_RT.shape[1]):
            v1, v2 = ker_S[:, a], ker_RT[:, b]
            if abs(1.0 + v2 @ v1) < 1e-8:
                v2 = 2.0 * v2
            T = np.eye(N) + np.outer(v1, v2)
            Tinv = np.eye(N) - np.outer(v1, v2) / (1.0 + v2 @ v1)
            Qbar = Tinv @ Q @ T
            if np.max(np.abs(Qbar - Q)) > 1e-10 * scale:
                return Qbar
    return None
