import numpy as np
import pytest

from topoid.identifiability import check_identifiability_general
from topoid.lti import StateSpaceSystem, assemble_network, closed_loop

ACCEPTANCE_LINES: list[str] = []


def _stable(rng, n, radius):
    A = rng.standard_normal((n, n))
    rho = max(abs(np.linalg.eigvals(A)))
    return A * (radius / rho) if rho > 0 else A


def make_random_node(rng, n, m=1, p=1, radius=0.9):
    return StateSpaceSystem(_stable(rng, n, radius), rng.standard_normal((n, m)), rng.standard_normal((p, n)))


def make_random_network(
    rng,
    N=None,
    max_n=3,
    mimo=False,
    m_ext=None,
    full_R=False,
    S_identity=True,
    q_scale=0.3,
    radius=0.9,
):
    """Random heterogeneous network with stable nodes and a weak interconnection."""
    N = N if N is not None else int(rng.integers(1, 4))
    nodes = []
    for _ in range(N):
        n = int(rng.integers(1, max_n + 1))
        m = int(rng.integers(1, 3)) if mimo else 1
        p = int(rng.integers(1, 3)) if mimo else 1
        nodes.append(make_random_node(rng, n, m, p, radius))
    M = sum(nd.m for nd in nodes)
    P = sum(nd.p for nd in nodes)
    Q = q_scale * rng.standard_normal((M, P))
    if full_R:
        R = np.eye(M)
    else:
        R = rng.standard_normal((M, m_ext if m_ext is not None else int(rng.integers(1, M + 1))))
    S = np.eye(P) if S_identity else rng.standard_normal((int(rng.integers(1, P + 1)), P))
    return assemble_network(nodes, Q, R, S)


def stable_network(rng, **kw):
    while True:
        net = make_random_network(rng, **kw)
        if max(abs(np.linalg.eigvals(closed_loop(net).A))) < 1:
            return net


def identifiable_network(rng):
    while True:
        net = stable_network(rng, N=int(rng.integers(1, 4)), mimo=bool(rng.integers(2)), full_R=True)
        if check_identifiability_general(net).identifiable:
            return net


@pytest.fixture
def random_network():
    return make_random_network


@pytest.fixture
def random_node():
    return make_random_node


def scaled_close(a, b, tol):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) <= tol * max(1.0, float(np.max(np.abs(b))))


def frequency_kernel_dim(transfer, n_points=12, seed=0, rtol=1e-9):
    """Constant-kernel dimension of a rational matrix sampled at random points.

    ``transfer(z)`` returns the complex matrix; real vectors annihilated at
    every sample form the null space of the stacked real and imaginary parts.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_points):
        z = complex(rng.uniform(1.5, 3.0), rng.uniform(-1.0, 1.0))
        T = np.atleast_2d(transfer(z))
        T = T / max(1.0, np.max(np.abs(T)))
        rows += [T.real, T.imag]
    X = np.vstack(rows)
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return X.shape[1]
    return X.shape[1] - int(np.sum(s > rtol * s[0]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
