import numpy as np
import pytest

from msgames import contraction as ct
from msgames import homogeneous as hg


@pytest.fixture
def sl2_semigroup():
    """The contraction induced on the u_y coordinate by the m=n=1 flow."""
    return ct.ContractionSemigroup.diagonal([2.0])


@pytest.fixture
def unit_interval():
    return ct.AdmissibleBase.unit(1)


@pytest.fixture
def plane_semigroup():
    return ct.ContractionSemigroup.diagonal([1.0, 1.0])


@pytest.fixture
def unit_square():
    return ct.AdmissibleBase.unit(2)


def random_unimodular(rng, k, size=5):
    """Integer matrix of determinant +-1 built from elementary moves."""
    M = np.eye(k, dtype=np.int64)
    for _ in range(size):
        i, j = rng.integers(0, k, size=2)
        if i == j:
            continue
        M[:, j] += int(rng.integers(-2, 3)) * M[:, i]
    return M


def random_lattice(rng, k, spread=1.0):
    """Random point of the lattice space: unimodular integer part times a
    flow-like diagonal times a unipotent jitter."""
    U = random_unimodular(rng, k).astype(float)
    d = rng.uniform(-spread, spread, size=k)
    d -= d.mean()
    D = np.diag(np.exp(d))
    N = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            N[i, j] = rng.uniform(-1, 1)
    return hg.LatticeBasis(D @ N @ U)


def int_det(M) -> int:
    """Exact determinant of a small integer matrix via Laplace expansion."""
    M = [[int(x) for x in row] for row in M]
    n = len(M)
    if n == 1:
        return M[0][0]
    total = 0
    for j in range(n):
        if M[0][j] == 0:
            continue
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        total += (-1) ** j * M[0][j] * int_det(minor)
    return total


def brute_force_shortest(B, box=6):
    """Reference sup-norm shortest vector by raw enumeration."""
    k = B.shape[1]
    axes = [np.arange(-box, box + 1)] * k
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    grid = grid[np.any(grid != 0, axis=1)]
    vals = np.max(np.abs(grid @ B.T), axis=1)
    i = np.argmin(vals)
    return float(vals[i]), grid[i]
