"""Discrete-time LTI realizations, network assembly and exact Markov parameters.

A network couples ``N`` node systems ``x_i(t+1) = A_i x_i + B_i v_i``,
``w_i = C_i x_i`` through ``v = Q w + R u`` and is observed via ``y = S w``.
Stacking the nodes gives the closed loop ``(A + BQC, BR, SC)`` where
``A, B, C`` are the block-diagonal direct sums of the node matrices.

Trajectories are arrays with time along the first axis, shape ``(T, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionMismatch, SingularResolvent

RESOLVENT_COND_LIMIT = 1e14


def _as_matrix(X, name):
    X = np.array(X, dtype=float, ndmin=2, copy=True)
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got ndim={X.ndim}")
    X.setflags(write=False)
    return X


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    """Realization ``x(t+1) = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        n = A.shape[0]
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
        if self.D is None:
            D = np.zeros((C.shape[0], B.shape[1]))
            D.setflags(write=False)
        else:
            D = _as_matrix(self.D, "D")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def transformed(self, T) -> StateSpaceSystem:
        """Similarity transform ``x -> T x``."""
        T = np.asarray(T, dtype=float)
        Ti = np.linalg.inv(T)
        return StateSpaceSystem(T @ self.A @ Ti, T @ self.B, self.C @ Ti, self.D)

    def same_realization(self, other: StateSpaceSystem) -> bool:
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.C, other.C)
            and np.array_equal(self.D, other.D)
        )


@dataclass(frozen=True, eq=False)
class MarkovSequence:
    """Ordered Markov parameters ``M_0 .. M_r`` stored as an ``(r+1, p, m)`` array."""

    params: np.ndarray

    def __post_init__(self):
        P = np.array(self.params, dtype=float, copy=True)
        if P.ndim == 1:
            P = P[:, None, None]
        if P.ndim != 3 or P.shape[0] < 1:
            raise DimensionMismatch(f"Markov parameters must form an (r+1, p, m) array, got {P.shape}")
        P.setflags(write=False)
        object.__setattr__(self, "params", P)

    @property
    def r(self) -> int:
        return self.params.shape[0] - 1

    @property
    def p(self) -> int:
        return self.params.shape[1]

    @property
    def m(self) -> int:
        return self.params.shape[2]

    def __len__(self):
        return self.params.shape[0]

    def __getitem__(self, k):
        return self.params[k]

    def __iter__(self):
        return iter(self.params)

    def stacked(self) -> np.ndarray:
        """``col(M_0, ..., M_r)``."""
        return self.params.reshape(-1, self.m)

    def transposed(self) -> MarkovSequence:
        return MarkovSequence(self.params.transpose(0, 2, 1))

    def truncated(self, r: int) -> MarkovSequence:
        return MarkovSequence(self.params[: r + 1])


def _split_blocks(X, name, row_sizes=None, col_sizes=None):
    """Accept ``X`` dense or as nested block lists; return the dense matrix.

    Block-list input is checked against the expected partition and the error
    names the first offending block.
    """
    if isinstance(X, np.ndarray) or not isinstance(X, (list, tuple)) or not X:
        return _as_matrix(X, name)
    first = X[0]
    is_nested = isinstance(first, (list, tuple)) and first and np.ndim(first[0]) >= 1
    if row_sizes is not None and col_sizes is not None and is_nested:
        if len(X) != len(row_sizes):
            raise DimensionMismatch(f"{name} has {len(X)} row blocks, network has {len(row_sizes)} nodes")
        rows = []
        for i, row in enumerate(X):
            if len(row) != len(col_sizes):
                raise DimensionMismatch(
                    f"{name} row block {i} has {len(row)} column blocks, expected {len(col_sizes)}"
                )
            blocks = []
            for j, blk in enumerate(row):
                blk = np.atleast_2d(np.asarray(blk, dtype=float))
                if blk.shape != (row_sizes[i], col_sizes[j]):
                    raise DimensionMismatch(
                        f"{name}[{i},{j}] has shape {blk.shape}, expected {(row_sizes[i], col_sizes[j])}"
                    )
                blocks.append(blk)
            rows.append(blocks)
        return _as_matrix(np.block(rows), name)
    return _as_matrix(X, name)


@dataclass(frozen=True, eq=False)
class Network:
    """Node realizations plus interconnection ``Q``, input map ``R`` and output map ``S``.

    ``Q`` is ``(sum m_i) x (sum p_i)``; block ``Q[i, j]`` is the weight of the
    edge ``j -> i``. ``R`` is ``(sum m_i) x m`` and ``S`` is ``p x (sum p_i)``.
    """

    nodes: tuple[StateSpaceSystem, ...]
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    _offsets: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if not nodes:
            raise DimensionMismatch("a network needs at least one node")
        for i, nd in enumerate(nodes):
            if not isinstance(nd, StateSpaceSystem):
                raise DimensionMismatch(f"node {i} is not a StateSpaceSystem")
            if np.any(nd.D != 0):
                raise DimensionMismatch(f"node {i} has nonzero feedthrough; node systems are strictly proper")
        msz = [nd.m for nd in nodes]
        psz = [nd.p for nd in nodes]
        Q = _split_blocks(self.Q, "Q", msz, psz)
        if isinstance(self.R, (list, tuple)) and self.R and np.ndim(self.R[0]) == 2:
            if len(self.R) != len(nodes):
                raise DimensionMismatch(f"R has {len(self.R)} row blocks, network has {len(nodes)} nodes")
            for i, blk in enumerate(self.R):
                if np.shape(blk)[0] != msz[i]:
                    raise DimensionMismatch(f"R block {i} has {np.shape(blk)[0]} rows, expected {msz[i]}")
            R = _as_matrix(np.vstack(self.R), "R")
        else:
            R = _as_matrix(self.R, "R")
        if isinstance(self.S, (list, tuple)) and self.S and np.ndim(self.S[0]) == 2:
            if len(self.S) != len(nodes):
                raise DimensionMismatch(f"S has {len(self.S)} column blocks, network has {len(nodes)} nodes")
            for i, blk in enumerate(self.S):
                if np.shape(blk)[1] != psz[i]:
                    raise DimensionMismatch(f"S block {i} has {np.shape(blk)[1]} columns, expected {psz[i]}")
            S = _as_matrix(np.hstack(self.S), "S")
        else:
            S = _as_matrix(self.S, "S")
        if Q.shape != (sum(msz), sum(psz)):
            raise DimensionMismatch(
                f"Q has shape {Q.shape}, expected {(sum(msz), sum(psz))} from node inputs {msz} and outputs {psz}"
            )
        if R.shape[0] != sum(msz):
            raise DimensionMismatch(f"R has {R.shape[0]} rows, expected {sum(msz)} (node inputs {msz})")
        if S.shape[1] != sum(psz):
            raise DimensionMismatch(f"S has {S.shape[1]} columns, expected {sum(psz)} (node outputs {psz})")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)
        object.__setattr__(
            self,
            "_offsets",
            {
                "n": np.concatenate([[0], np.cumsum([nd.n for nd in nodes])]).astype(int),
                "m": np.concatenate([[0], np.cumsum(msz)]).astype(int),
                "p": np.concatenate([[0], np.cumsum(psz)]).astype(int),
            },
        )

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def n_sizes(self) -> list[int]:
        return [nd.n for nd in self.nodes]

    @property
    def m_sizes(self) -> list[int]:
        return [nd.m for nd in self.nodes]

    @property
    def p_sizes(self) -> list[int]:
        return [nd.p for nd in self.nodes]

    @property
    def n(self) -> int:
        """Total state dimension."""
        return sum(self.n_sizes)

    @property
    def m(self) -> int:
        """Number of external inputs."""
        return self.R.shape[1]

    @property
    def p(self) -> int:
        """Number of external outputs."""
        return self.S.shape[0]

    @cached_property
    def A(self) -> np.ndarray:
        return block_diag(*[nd.A for nd in self.nodes])

    @cached_property
    def B(self) -> np.ndarray:
        return block_diag(*[nd.B for nd in self.nodes])

    @cached_property
    def C(self) -> np.ndarray:
        return block_diag(*[nd.C for nd in self.nodes])

    def input_slice(self, i: int) -> slice:
        o = self._offsets["m"]
        return slice(o[i], o[i + 1])

    def output_slice(self, i: int) -> slice:
        o = self._offsets["p"]
        return slice(o[i], o[i + 1])

    def state_slice(self, i: int) -> slice:
        o = self._offsets["n"]
        return slice(o[i], o[i + 1])

    def Q_block(self, i: int, j: int) -> np.ndarray:
        return self.Q[self.input_slice(i), self.output_slice(j)]

    def R_block(self, i: int) -> np.ndarray:
        return self.R[self.input_slice(i)]

    def S_block(self, i: int) -> np.ndarray:
        return self.S[:, self.output_slice(i)]

    def replace(self, **changes) -> Network:
        return replace(self, **changes)


def assemble_network(nodes: Sequence[StateSpaceSystem], Q, R, S) -> Network:
    """Build a :class:`Network`; ``Q``, ``R`` and ``S`` may be dense or block lists."""
    return Network(tuple(nodes), Q, R, S)


def closed_loop(net: Network) -> StateSpaceSystem:
    return StateSpaceSystem(net.A + net.B @ net.Q @ net.C, net.B @ net.R, net.S @ net.C)


def simulate(sys: StateSpaceSystem, x0, u) -> np.ndarray:
    """Run the state recursion; returns outputs with shape ``(T, p)``."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != sys.m:
        raise DimensionMismatch(f"input has shape {u.shape}, expected (T, {sys.m})")
    x = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != sys.n:
        raise DimensionMismatch(f"x0 has length {x.shape[0]}, expected {sys.n}")
    T = u.shape[0]
    y = np.empty((T, sys.p))
    for t in range(T):
        y[t] = sys.C @ x + sys.D @ u[t]
        x = sys.A @ x + sys.B @ u[t]
    return y


def system_markov(sys: StateSpaceSystem, count: int) -> MarkovSequence:
    """``C A^k B`` for ``k = 0 .. count-1`` (feedthrough excluded)."""
    count = max(int(count), 1)
    out = np.empty((count, sys.p, sys.m))
    X = sys.B.copy()
    for k in range(count):
        out[k] = sys.C @ X
        X = sys.A @ X
    return MarkovSequence(out)


def markov_exact(net: Network, r: int, use_S: bool = False) -> MarkovSequence:
    """Markov parameters ``C_out (A + BQC)^l BR`` for ``l = 0..r``.

    With ``use_S=False`` the output map is ``C`` (all node outputs), which is
    the convention the reconstruction path works in; ``use_S=True`` gives the
    parameters of the measured transfer ``SC(zI - A - BQC)^{-1} BR``.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    Acl = net.A + net.B @ net.Q @ net.C
    Cout = net.S @ net.C if use_S else net.C
    out = np.empty((r + 1, Cout.shape[0], net.m))
    X = net.B @ net.R
    for k in range(r + 1):
        out[k] = Cout @ X
        X = Acl @ X
    return MarkovSequence(out)


def markov_recursion(net: Network, Q_candidate, prior) -> np.ndarray:
    """Next Markov parameter from the lower-order ones, affine in ``Q_candidate``.

    ``M_l = C A^l B R + sum_{i<l} C A^i B Q M_{l-i-1}`` with ``l = len(prior)``.
    """
    Q_candidate = np.asarray(Q_candidate, dtype=float)
    if Q_candidate.shape != net.Q.shape:
        raise DimensionMismatch(f"Q_candidate has shape {Q_candidate.shape}, expected {net.Q.shape}")
    prior = [] if prior is None else list(prior)
    ell = len(prior)
    for k, Mk in enumerate(prior):
        if np.shape(Mk) != (net.C.shape[0], net.m):
            raise DimensionMismatch(f"prior[{k}] has shape {np.shape(Mk)}, expected {(net.C.shape[0], net.m)}")
    CAB = system_markov(StateSpaceSystem(net.A, net.B, net.C), ell + 1).params
    # C A^l B R via the running product A^l B
    X = net.B @ net.R
    for _ in range(ell):
        X = net.A @ X
    M = net.C @ X
    for i in range(ell):
        M = M + CAB[i] @ Q_candidate @ prior[ell - i - 1]
    return M


def transfer_eval(sys: StateSpaceSystem, z: complex) -> np.ndarray:
    """``C (zI - A)^{-1} B + D``; raises SingularResolvent near a pole."""
    if sys.n == 0:
        return sys.D.astype(complex)
    M = z * np.eye(sys.n) - sys.A
    if np.linalg.cond(M) > RESOLVENT_COND_LIMIT:
        raise SingularResolvent(f"z={z} is (numerically) an eigenvalue of A")
    return sys.C @ np.linalg.solve(M, sys.B.astype(complex)) + sys.D


def node_transfer(net: Network, z: complex) -> np.ndarray:
    """Block-diagonal ``G(z)`` of all node transfer matrices."""
    return block_diag(*[transfer_eval(nd, z) for nd in net.nodes])


def network_transfer(net: Network, z: complex) -> np.ndarray:
    """``S (I - G(z) Q)^{-1} G(z) R`` built from the node transfers."""
    G = node_transfer(net, z)
    ImGQ = np.eye(G.shape[0]) - G @ net.Q
    return net.S @ np.linalg.solve(ImGQ, G @ net.R)
