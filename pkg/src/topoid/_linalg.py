"""Shared rank machinery.

Every rank decision in the package goes through :func:`rank_tolerance` so
verdicts computed in different modules are consistent.
"""

import numpy as np

RANK_TOL_FACTOR = 10.0


def rank_tolerance(sigma_max, shape):
    return max(shape) * sigma_max * np.finfo(float).eps * RANK_TOL_FACTOR


def numerical_rank(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tolerance(s[0], X.shape)))


def null_space(X):
    """Orthonormal basis (as columns) of the right null space of ``X``.

    Returns the basis together with the singular values used to decide it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ncols = X.shape[1]
    if X.shape[0] == 0:
        return np.eye(ncols), np.zeros(0)
    _, s, vh = np.linalg.svd(X, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(ncols), s
    rank = int(np.sum(s > rank_tolerance(s[0], X.shape)))
    return vh[rank:].T.copy(), s


def pinv_with_rank(X):
    """Moore-Penrose inverse using the shared cutoff; also returns the rank."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    u, s, vh = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(X.shape[::-1]), 0
    tol = rank_tolerance(s[0], X.shape)
    keep = s > tol
    rank = int(keep.sum())
    pinv = (vh[:rank].T / s[:rank]) @ u[:, :rank].T
    return pinv, rank


def is_identity(X):
    X = np.asarray(X)
    return X.ndim == 2 and X.shape[0] == X.shape[1] and np.array_equal(X, np.eye(X.shape[0]))
