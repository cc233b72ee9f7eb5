import numpy as np
import pytest

from kdpp_gibbs.discrete import random_psd


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def psd():
    def make(n, seed=0, rank=None):
        return random_psd(n, np.random.default_rng(seed), rank=rank)

    return make


def brute_det(matrix, subset):
    """Determinant of a principal submatrix by cofactor expansion (no LAPACK)."""
    idx = list(subset)
    if not idx:
        return 1.0
    if len(idx) == 1:
        return float(matrix[idx[0], idx[0]])
    total = 0.0
    head = idx[0]
    for j, col in enumerate(idx):
        minor_rows = idx[1:]
        minor_cols = idx[:j] + idx[j + 1 :]
        sub = matrix[np.ix_(minor_rows, minor_cols)]
        total += (-1) ** j * matrix[head, col] * _det_general(sub)
    return total


def _det_general(a):
    n = a.shape[0]
    if n == 0:
        return 1.0
    if n == 1:
        return float(a[0, 0])
    return sum(
        (-1) ** j * a[0, j] * _det_general(np.delete(np.delete(a, 0, 0), j, 1)) for j in range(n)
    )
