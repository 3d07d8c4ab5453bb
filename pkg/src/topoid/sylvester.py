"""Recover the interconnection matrix from Markov parameters.

With ``K_l = M_l - C A^l B R`` the Markov parameters satisfy the generalized
Sylvester equation ``K = sum_{i<r} L_i Q M_i`` where ``L_i`` is the
``(i+1)``-th column block of the block-Toeplitz matrix of ``C A^k B``.
Vectorizing (column-major) gives ``sum_i (M_i^T kron L_i) vec(Q) = vec(K)``.
Because ``A, B, C`` are block diagonal, each block row of ``Q`` solves its own
smaller equation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._linalg import is_identity, numerical_rank, pinv_with_rank
from .errors import InsufficientOrder, ProblemTooLarge, RankDeficientS
from .lti import MarkovSequence, Network

DEFAULT_MAX_UNKNOWNS = 40_000


@dataclass(frozen=True, eq=False)
class SylvesterSystem:
    """Data ``K``, ``L_0..L_{r-1}``, ``M_0..M_{r-1}`` of one Sylvester equation.

    ``node`` is set for the per-node row-block equations.
    """

    K: np.ndarray
    L_blocks: tuple
    M_blocks: tuple
    r: int
    m_sizes: tuple = ()
    p_sizes: tuple = ()
    node: int | None = None

    @property
    def unknown_shape(self) -> tuple[int, int]:
        return self.L_blocks[0].shape[1], self.M_blocks[0].shape[0]

    def coefficient_matrix(self) -> np.ndarray:
        """``sum_i M_i^T kron L_i``."""
        X = np.kron(self.M_blocks[0].T, self.L_blocks[0])
        for Mi, Li in zip(self.M_blocks[1:], self.L_blocks[1:]):
            X += np.kron(Mi.T, Li)
        return X

    def rhs(self) -> np.ndarray:
        return self.K.reshape(-1, order="F")

    def residual(self, Q) -> np.ndarray:
        """``K - sum_i L_i Q M_i``."""
        Q = np.asarray(Q, dtype=float)
        return self.K - sum(Li @ Q @ Mi for Li, Mi in zip(self.L_blocks, self.M_blocks))


@dataclass
class SolveReport:
    Q_hat: np.ndarray
    residual: float
    alpha: float
    unique: bool
    rank: int
    bound: float | None = None
    m_sizes: tuple = ()
    p_sizes: tuple = ()
    blocks: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "Q_hat": {"shape": list(self.Q_hat.shape), "data": self.Q_hat.ravel().tolist()},
            "m_sizes": list(self.m_sizes),
            "p_sizes": list(self.p_sizes),
            "residual": self.residual,
            "alpha": self.alpha,
            "bound": self.bound,
            "unique": self.unique,
            "rank": self.rank,
            "blocks": self.blocks,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SolveReport:
        Q = np.asarray(d["Q_hat"]["data"], dtype=float).reshape(d["Q_hat"]["shape"])
        return cls(
            Q, d["residual"], d["alpha"], d["unique"], d["rank"], d.get("bound"),
            tuple(d.get("m_sizes", ())), tuple(d.get("p_sizes", ())), list(d.get("blocks", [])),
        )


def _measured_to_node_outputs(net: Network, M: np.ndarray) -> np.ndarray:
    if is_identity(net.S):
        return M
    if numerical_rank(net.S) < net.S.shape[1]:
        raise RankDeficientS("reconstruction needs S with full column rank")
    if M.shape[1] != net.S.shape[0]:
        raise InsufficientOrder(f"Markov parameters have {M.shape[1]} rows, S has {net.S.shape[0]}")
    return np.einsum("ij,ljk->lik", np.linalg.pinv(net.S), M)


def min_order(net: Network) -> int:
    return 2 * net.n - 1


def build_system(net: Network, markov: MarkovSequence, r: int | None = None) -> SylvesterSystem:
    """Assemble ``K``, ``L_i`` and ``M_i`` from the node data and measured Markov parameters.

    ``r`` defaults to ``2n - 1``, the smallest order that pins down ``Q``.
    When ``S`` is not the identity it must have full column rank and the
    parameters are mapped back to node outputs with its pseudoinverse.
    """
    r = min_order(net) if r is None else int(r)
    if r < min_order(net):
        raise InsufficientOrder(f"r = {r} < 2n - 1 = {min_order(net)}")
    if len(markov) < r + 1:
        raise InsufficientOrder(f"need M_0..M_{r}, got {len(markov)} Markov parameters")
    M = _measured_to_node_outputs(net, markov.params[: r + 1])
    A, B, C, R = net.A, net.B, net.C, net.R
    pC, mB = C.shape[0], B.shape[1]

    CAkB = np.empty((r, pC, mB))
    X = B.copy()
    for k in range(r):
        CAkB[k] = C @ X
        X = A @ X
    free = np.empty((r + 1, pC, net.m))
    X = B @ R
    for k in range(r + 1):
        free[k] = C @ X
        X = A @ X

    K = (M[1:] - free[1:]).reshape(r * pC, net.m)
    L_blocks = []
    for i in range(r):
        Li = np.zeros((r, pC, mB))
        Li[i:] = CAkB[: r - i]
        L_blocks.append(Li.reshape(r * pC, mB))
    return SylvesterSystem(
        K, tuple(L_blocks), tuple(M[:r]), r, tuple(net.m_sizes), tuple(net.p_sizes)
    )


def build_node_systems(net: Network, markov: MarkovSequence, r: int | None = None) -> list[SylvesterSystem]:
    """One row-block equation ``K^(j) = sum_i L_i^(j) Q^(j) M_i`` per node."""
    full = build_system(net, markov, r)
    r = full.r
    pC, m = full.K.shape[0] // r, full.K.shape[1]
    K3 = full.K.reshape(r, pC, m)
    out = []
    for j in range(net.N):
        rows, cols = net.output_slice(j), net.input_slice(j)
        Kj = K3[:, rows, :].reshape(-1, m)
        Lj = tuple(Li.reshape(r, pC, -1)[:, rows, cols].reshape(-1, cols.stop - cols.start) for Li in full.L_blocks)
        out.append(SylvesterSystem(Kj, Lj, full.M_blocks, r, full.m_sizes, full.p_sizes, node=j))
    return out


def _solve(sys: SylvesterSystem, max_unknowns: int | None):
    rows, cols = sys.unknown_shape
    if max_unknowns is not None and rows * cols > max_unknowns:
        raise ProblemTooLarge(
            f"{rows * cols} unknowns exceed the limit of {max_unknowns}; use the blockwise solver"
        )
    X = sys.coefficient_matrix()
    b = sys.rhs()
    X_pinv, rank = pinv_with_rank(X)
    q = X_pinv @ b
    residual = float(np.linalg.norm(X @ q - b))
    alpha = float(np.linalg.norm(X_pinv, np.inf)) if X_pinv.size else 0.0
    return q.reshape(rows, cols, order="F"), residual, alpha, rank, rank == X.shape[1]


def solve_vectorized(sys: SylvesterSystem, max_unknowns: int | None = DEFAULT_MAX_UNKNOWNS) -> SolveReport:
    """Minimum-norm least-squares solution of the full vectorized equation.

    ``alpha`` is the infinity norm of the pseudoinverse of the coefficient
    matrix; ``unique`` reports full column rank.
    """
    Q_hat, residual, alpha, rank, unique = _solve(sys, max_unknowns)
    return SolveReport(Q_hat, residual, alpha, unique, rank, None, sys.m_sizes, sys.p_sizes)


def solve_least_squares(sys: SylvesterSystem, max_unknowns: int | None = DEFAULT_MAX_UNKNOWNS) -> SolveReport:
    """Least-squares fit for a system built from perturbed Markov parameters.

    Same computation as :func:`solve_vectorized`; kept separate because
    ``alpha`` is then the sensitivity constant of the error bound.
    """
    return solve_vectorized(sys, max_unknowns)


def solve_blockwise(systems, parallel: bool = False, max_workers: int | None = None) -> SolveReport:
    """Solve each node's row-block equation and stack the rows of ``Q``.

    The full coefficient matrix is block diagonal up to permutation, so
    ``alpha`` is the largest per-block value.
    """
    systems = sorted(systems, key=lambda s: s.node if s.node is not None else 0)
    if parallel and len(systems) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda s: _solve(s, None), systems))
    else:
        results = [_solve(s, None) for s in systems]
    blocks = [
        {"node": s.node, "residual": res, "alpha": alpha, "rank": rank, "unique": bool(uniq)}
        for s, (_, res, alpha, rank, uniq) in zip(systems, results)
    ]
    Q_hat = np.vstack([res[0] for res in results])
    first = systems[0]
    return SolveReport(
        Q_hat,
        float(np.sqrt(sum(b["residual"] ** 2 for b in blocks))),
        max(b["alpha"] for b in blocks),
        all(b["unique"] for b in blocks),
        sum(b["rank"] for b in blocks),
        None,
        first.m_sizes,
        first.p_sizes,
        blocks,
    )


def kronecker_term(delta_t_inf, L_blocks) -> float:
    """Upper bound ``sum_i ||Delta_i^T||_inf ||L_i||_inf`` on ``||sum_i Delta_i^T kron L_i||_inf``."""
    norms = np.array([np.linalg.norm(Li, np.inf) for Li in L_blocks])
    dt = np.asarray(delta_t_inf, dtype=float)
    if dt.ndim == 1 and dt.size > norms.size:
        dt = dt[: norms.size]  # Delta_r enters K only, never the coefficient matrix
    dt = np.broadcast_to(dt, norms.shape)
    return float(dt @ norms)


def robustness_bound(report: SolveReport, delta_inf, q_inf: float, L_blocks, delta_t_inf=None) -> float:
    """Worst-case ``||vec(Q_hat) - vec(Q)||_inf`` under bounded Markov errors.

    Args:
        report: solution carrying ``alpha``.
        delta_inf: bound(s) on ``||Delta_l||_inf`` for the perturbations
            entering ``K``; a sequence is reduced with ``max``.
        q_inf: bound on the largest entry of ``Q`` in magnitude.
        L_blocks: the Toeplitz column blocks used in the solve.
        delta_t_inf: bound(s) on ``||Delta_i^T||_inf`` for ``i < r``; defaults
            to ``delta_inf``.
    """
    delta = float(np.max(delta_inf))
    dt = delta_inf if delta_t_inf is None else delta_t_inf
    return report.alpha * (delta + kronecker_term(dt, L_blocks) * q_inf)


def threshold_topology(Q_hat, gamma: float, bound: float):
    """Zero every entry below ``gamma / 2`` in magnitude.

    Returns ``(Q_thresholded, valid)``; ``valid`` is true when ``bound < gamma/2``,
    in which case the zero pattern is guaranteed correct for weights at least
    ``gamma`` in magnitude.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    Q = np.array(Q_hat, dtype=float, copy=True)
    Q[np.abs(Q) < gamma / 2] = 0.0
    return Q, bool(bound < gamma / 2)
