"""Data-driven Markov parameter estimation.

Given one input/output trajectory of a (closed-loop) system of order ``n``
whose input is persistently exciting of order ``2n + r + 1``, the impulse
response ``D, CB, ..., CA^{r-1}B`` is read off block-Hankel data matrices
without identifying a state-space model first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import numerical_rank, pinv_with_rank
from .errors import DepthExceedsLength, DimensionMismatch, ExcitationFailure, NotPersistentlyExciting, ResidualTooLarge
from .lti import MarkovSequence

RESIDUAL_RTOL = 1e-6
PE_ATTEMPTS = 10


def _as_signal(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.ndim != 2:
        raise DimensionMismatch(f"signal must be (T,) or (T, dim), got shape {f.shape}")
    return f


@dataclass(frozen=True, eq=False)
class DataSet:
    """Input ``u`` with shape ``(T, m)`` and output ``y`` with shape ``(T, p)``."""

    u: np.ndarray
    y: np.ndarray
    n_assumed: int | None = None

    def __post_init__(self):
        u, y = _as_signal(self.u), _as_signal(self.y)
        if u.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"u has {u.shape[0]} samples but y has {y.shape[0]}")
        if u.shape[0] < 1:
            raise DimensionMismatch("empty trajectory")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def T(self) -> int:
        return self.u.shape[0]


def hankel(f, k: int) -> np.ndarray:
    """Block Hankel matrix of depth ``k``; block ``(a, b)`` is ``f(a + b)``.

    Shape is ``(k * dim, T - k + 1)``.
    """
    f = _as_signal(f)
    T, dim = f.shape
    if k < 1:
        raise DepthExceedsLength("depth must be at least 1")
    if k > T:
        raise DepthExceedsLength(f"depth {k} exceeds signal length {T}")
    cols = T - k + 1
    idx = np.arange(k)[:, None] + np.arange(cols)[None, :]
    # (k, cols, dim) -> (k, dim, cols) -> (k*dim, cols)
    return f[idx].transpose(0, 2, 1).reshape(k * dim, cols)


def is_persistently_exciting(u, order: int) -> bool:
    u = _as_signal(u)
    T, m = u.shape
    if order < 1 or order > T or order * m > T - order + 1:
        return False
    return numerical_rank(hankel(u, order)) == order * m


def pe_length(m: int, n: int, r: int) -> int:
    """Shortest input that can be persistently exciting of order ``2n + r + 1``."""
    return (m + 1) * (2 * n + r + 1) - 1


def design_pe_input(m: int, n: int, r: int, seed: int) -> np.ndarray:
    """Standard-normal input of minimal length, checked for excitation order ``2n + r + 1``.

    Up to ten seeds ``seed, seed + 1, ...`` are tried before giving up.
    """
    if m < 1 or n < 0 or r < 0:
        raise ValueError("need m >= 1 and n, r >= 0")
    T = pe_length(m, n, r)
    order = 2 * n + r + 1
    for attempt in range(PE_ATTEMPTS):
        u = np.random.default_rng(seed + attempt).standard_normal((T, m))
        if is_persistently_exciting(u, order):
            return u
    raise ExcitationFailure(f"no persistently exciting input of order {order} after {PE_ATTEMPTS} seeds")


def estimate_impulse_response(data: DataSet, n: int, r: int) -> np.ndarray:
    """Stacked ``D, CB, CAB, ..., CA^{r-1}B`` as an ``(r+1, p, m)`` array.

    Uses Hankel matrices of depth ``n + r + 1`` split into ``n`` past and
    ``r + 1`` future block rows, and the minimum-norm solution ``G`` of
    ``[U_p; Y_p; U_f] G = [0; 0; col(I, 0)]``; the result is ``Y_f G``.
    """
    if n < 0 or r < 1:
        raise ValueError("need n >= 0 and r >= 1")
    u, y = data.u, data.y
    m, p = u.shape[1], y.shape[1]
    if not is_persistently_exciting(u, 2 * n + r + 1):
        raise NotPersistentlyExciting(f"input is not persistently exciting of order {2 * n + r + 1}")
    depth = n + r + 1
    Hu, Hy = hankel(u, depth), hankel(y, depth)
    Up, Uf = Hu[: n * m], Hu[n * m :]
    Yp, Yf = Hy[: n * p], Hy[n * p :]
    Phi = np.vstack([Up, Yp, Uf])
    rhs = np.zeros((Phi.shape[0], m))
    rhs[(n * m + n * p) : (n * m + n * p + m)] = np.eye(m)
    Phi_pinv, _ = pinv_with_rank(Phi)
    G = Phi_pinv @ rhs
    resid = np.linalg.norm(Phi @ G - rhs)
    if resid > RESIDUAL_RTOL * np.linalg.norm(rhs):
        raise ResidualTooLarge(
            f"data equation residual {resid:.3e}; check the assumed order n, the data length or noise"
        )
    return (Yf @ G).reshape(r + 1, p, m)


def estimate_markov(data: DataSet, n: int, r: int) -> MarkovSequence:
    """Markov parameters ``M_0 .. M_{r-1}`` (feedthrough dropped) from data.

    The data must be persistently exciting of order ``2n + r + 1``; see
    :func:`design_pe_input`.
    """
    return MarkovSequence(estimate_impulse_response(data, n, r)[1:])


def perturb_markov(markov: MarkovSequence, bound: float, seed: int, distribution: str = "normal"):
    """Add independent random perturbations ``Delta_l`` to every Markov parameter.

    Each ``Delta_l`` is rescaled so that ``max(||Delta_l||_inf, ||Delta_l^T||_inf)``
    equals ``bound`` exactly. Returns the perturbed sequence and the
    ``(r+1, p, m)`` array of perturbations.
    """
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    rng = np.random.default_rng(seed)
    shape = markov.params.shape
    if distribution == "normal":
        D = rng.standard_normal(shape)
    elif distribution == "uniform":
        D = rng.uniform(-1.0, 1.0, shape)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    for k in range(shape[0]):
        scale = max(np.linalg.norm(D[k], np.inf), np.linalg.norm(D[k].T, np.inf))
        D[k] *= bound / scale if scale > 0 else 0.0
    return MarkovSequence(markov.params + D), D
