"""Exact k-DPPs on small ground sets by full enumeration.

These objects are the ground truth for every sampler and chain check: the
pmf over all C(n, k) subsets, an inverse-CDF sampler, and exact
conditional distributions over extensions of a fixed set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, DomainError

MAX_GROUND_SET = 24
MAX_STATES = 2_000_000
# det below this fraction of the Hadamard bound prod(diag) is treated as zero
SINGULAR_RTOL = 1e-12


def _as_matrix(kernel) -> np.ndarray:
    values = getattr(kernel, "values", None)
    m = np.asarray(kernel if values is None else values, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square kernel matrix, got shape {m.shape}")
    return m


def check_budget(n: int, k: int) -> int:
    count = math.comb(n, k)
    if n > MAX_GROUND_SET or count > MAX_STATES:
        raise CapacityError(
            f"C({n},{k}) = {count} subsets exceeds the enumeration budget "
            f"(n <= {MAX_GROUND_SET}, at most {MAX_STATES} subsets)"
        )
    return count


def subset_log_dets(matrix: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """log det of each principal submatrix; -inf where numerically singular."""
    subsets = np.asarray(subsets, dtype=np.intp)
    if subsets.shape[1] == 0:
        return np.zeros(len(subsets))
    sub = matrix[subsets[:, :, None], subsets[:, None, :]]
    sign, logdet = np.linalg.slogdet(sub)
    diag = np.einsum("sii->si", sub)
    with np.errstate(divide="ignore"):
        hadamard = np.sum(np.log(np.maximum(diag, 0.0)), axis=1)
    zero = (sign <= 0) | (logdet < hadamard + math.log(SINGULAR_RTOL))
    return np.where(zero, -np.inf, logdet)


@dataclass(frozen=True, eq=False)
class DiscreteKDpp:
    """Enumerated k-DPP: ``states[i]`` is a sorted index tuple with mass ``pmf[i]``."""

    kernel: np.ndarray
    k: int
    states: tuple
    pmf: np.ndarray
    log_dets: np.ndarray
    log_partition: float
    partition: float

    @property
    def n(self) -> int:
        return self.kernel.shape[0]

    def index_of(self, subset) -> int:
        return self._index[tuple(sorted(int(i) for i in subset))]

    @property
    def _index(self) -> dict:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {s: i for i, s in enumerate(self.states)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def prob(self, subset) -> float:
        return float(self.pmf[self.index_of(subset)])

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.pmf > 0)


def enumerate_pmf(kernel, k: int) -> DiscreteKDpp:
    """Exact k-DPP over all size-``k`` subsets of the ground set."""
    m = _as_matrix(kernel)
    n = m.shape[0]
    if not 0 <= k <= n:
        raise DomainError(f"k={k} must lie in [0, {n}]")
    check_budget(n, k)
    states = tuple(combinations(range(n), k))
    idx = np.array(states, dtype=np.intp).reshape(len(states), k)
    log_dets = subset_log_dets(m, idx)
    if not np.any(np.isfinite(log_dets)):
        raise DomainError(f"every {k}-subset has zero determinant (rank < k)")
    log_z = float(logsumexp(log_dets))
    pmf = np.exp(log_dets - log_z)
    pmf.setflags(write=False)
    partition = math.fsum(np.exp(log_dets[np.isfinite(log_dets)]))
    return DiscreteKDpp(m, k, states, pmf, log_dets, log_z, partition)


def exact_sample(dpp: DiscreteKDpp, rng: np.random.Generator) -> tuple:
    """Inverse-CDF draw from the enumerated pmf."""
    cdf = np.cumsum(dpp.pmf)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return dpp.states[min(i, len(cdf) - 1)]


def exact_samples(dpp: DiscreteKDpp, rng: np.random.Generator, size: int) -> np.ndarray:
    """State indices of ``size`` independent exact draws."""
    return rng.choice(len(dpp.states), size=size, p=dpp.pmf)


def conditional_pmf(kernel, S: Sequence[int], j: int):
    """Distribution over j-subsets T of the complement of S with P(T) ~ det L_{S+T}.

    Returns ``(extensions, pmf)`` where ``extensions`` are sorted tuples.
    """
    m = _as_matrix(kernel)
    n = m.shape[0]
    S = tuple(sorted(int(i) for i in S))
    if len(set(S)) != len(S) or any(not 0 <= i < n for i in S):
        raise DomainError(f"conditioning set {S} is not a set of ground elements")
    if j < 1 or len(S) + j > n:
        raise DomainError(f"|S| + j = {len(S) + j} must lie in [|S|+1, n={n}]")
    rest = [i for i in range(n) if i not in S]
    check_budget(len(rest), j)
    extensions = tuple(combinations(rest, j))
    idx = np.array([S + e for e in extensions], dtype=np.intp)
    log_dets = subset_log_dets(m, idx)
    if not np.any(np.isfinite(log_dets)):
        raise DomainError(f"conditioning set {S} admits no extension of positive density")
    pmf = np.exp(log_dets - logsumexp(log_dets))
    return extensions, pmf


def load_kernel_matrix(path) -> np.ndarray:
    """Read the plain-text format: a line with n, then n rows of n reals."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty kernel file")
    try:
        n = int(lines[0].strip())
    except ValueError as exc:
        raise ValueError(f"{path}: first line must be the integer n") from exc
    rows = [ln.split() for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {n} rows of {n} values")
    return np.array([[float(v) for v in r] for r in rows])


def save_kernel_matrix(path, matrix) -> None:
    m = np.asarray(matrix, dtype=float)
    body = "\n".join(" ".join(format(v, ".17g") for v in row) for row in m)
    Path(path).write_text(f"{m.shape[0]}\n{body}\n")


def random_psd(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random PSD matrix B B^T scaled to unit maximum diagonal."""
    r = n if rank is None else rank
    b = rng.standard_normal((n, r)) * rng.uniform(0.3, 1.0, size=(n, 1))
    m = b @ b.T
    m = 0.5 * (m + m.T)
    return m / np.max(np.diag(m))
