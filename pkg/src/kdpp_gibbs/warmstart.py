"""Greedy sequential initialization and its exact output distribution.

``greedy_start`` builds the state one point at a time, each drawn from the
one-point conditional given the points chosen so far.  On enumerable
instances ``greedy_pmf_exact`` sums, for each subset, the probability of
every visiting order, which lets the density ratio against the k-DPP be
checked exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .chain import PointConfig
from .conditional import ConditionalOracle
from .discrete import DiscreteKDpp, check_budget
from .errors import CapacityError, DomainError, OracleBudgetError, VerificationError
from .kernel import Kernel, empty_view, extend

MAX_GREEDY_K = 7


@dataclass
class WarmStartResult:
    state: PointConfig
    per_step_trials: list = field(default_factory=list)

    @property
    def total_trials(self) -> int:
        return sum(self.per_step_trials)


def greedy_start(kernel: Kernel, k: int, oracle: ConditionalOracle, rng) -> WarmStartResult:
    """Exactly ``k`` oracle calls, growing the point set in index order."""
    if oracle.kernel is not kernel:
        raise ValueError("oracle must be built on the same kernel")
    view = empty_view(kernel)
    trials = []
    for i in range(k):
        try:
            y, t = oracle.draw(view, rng)
        except OracleBudgetError as exc:
            raise exc.with_context(greedy_step=i, partial_state=view.points) from None
        trials.append(t)
        view = extend(view, y)
        if view.singular:
            raise AssertionError(f"greedy step {i} produced a zero-density set")
    return WarmStartResult(PointConfig(view), trials)


def _subset_tables(dpp: DiscreteKDpp):
    """det of every subset of size <= k and the extension mass sum_z det(T + z)."""
    m = dpp.kernel
    n, k = dpp.n, dpp.k
    det = {(): 1.0}
    for size in range(1, k + 1):
        for s in combinations(range(n), size):
            d = float(np.linalg.det(m[np.ix_(s, s)]))
            hadamard = float(np.prod(np.diag(m)[list(s)]))
            det[s] = d if d > 1e-12 * hadamard else 0.0
    mass = {}
    for size in range(0, k):
        for s in combinations(range(n), size):
            mass[s] = math.fsum(
                det[tuple(sorted(s + (z,)))] for z in range(n) if z not in s
            )
    return det, mass


def greedy_pmf_exact(dpp: DiscreteKDpp) -> np.ndarray:
    """pmf of the greedy output, aligned with ``dpp.states``."""
    k = dpp.k
    if k > MAX_GREEDY_K:
        raise CapacityError(f"k={k} needs {math.factorial(k)} orderings per subset (max k={MAX_GREEDY_K})")
    check_budget(dpp.n, k)
    det, mass = _subset_tables(dpp)
    # probability that the greedy prefix, as an unordered set, equals s
    prefix = {(): 1.0}
    for size in range(1, k + 1):
        for s in combinations(range(dpp.n), size):
            if det[s] == 0.0:
                prefix[s] = 0.0
                continue
            total = 0.0
            for j in range(size):
                parent = s[:j] + s[j + 1 :]
                if prefix[parent] > 0.0 and mass[parent] > 0.0:
                    total += prefix[parent] * det[s] / mass[parent]
            prefix[s] = total
    return np.array([prefix[s] for s in dpp.states])


def greedy_pmf_by_orderings(dpp: DiscreteKDpp) -> np.ndarray:
    """Same pmf by explicit summation over all k! visiting orders (slower oracle)."""
    det, mass = _subset_tables(dpp)
    out = np.zeros(len(dpp.states))
    for a, s in enumerate(dpp.states):
        if det[s] == 0.0:
            continue
        for order in permutations(s):
            p = 1.0
            for i in range(len(order)):
                prev = tuple(sorted(order[:i]))
                cur = tuple(sorted(order[: i + 1]))
                p *= det[cur] / mass[prev]
            out[a] += p
    return out


def density_ratios(dpp: DiscreteKDpp, nu: np.ndarray | None = None) -> np.ndarray:
    """nu / pi on the support of pi; raises if nu puts mass on pi-null states."""
    nu = greedy_pmf_exact(dpp) if nu is None else nu
    pi = dpp.pmf
    null = pi == 0
    if np.any(nu[null] > 1e-15):
        bad = int(np.flatnonzero(null & (nu > 1e-15))[0])
        raise VerificationError(
            "greedy output charges a zero-density state",
            {"state": dpp.states[bad], "nu": float(nu[bad])},
        )
    return nu[~null] / pi[~null]


def variance_bound_check(dpp: DiscreteKDpp, nu: np.ndarray | None = None) -> float:
    """Exact Var_pi(nu / pi); raises if above (k!)^4 - 1."""
    nu = greedy_pmf_exact(dpp) if nu is None else nu
    r = density_ratios(dpp, nu)
    pi = dpp.pmf[dpp.pmf > 0]
    var = float(np.dot(pi, (r - 1.0) ** 2))
    limit = math.factorial(dpp.k) ** 4 - 1
    if var > limit + 1e-9:
        raise VerificationError(
            f"Var(nu/pi) = {var} exceeds (k!)^4 - 1 = {limit}", {"k": dpp.k, "variance": var}
        )
    return var


def max_density_ratio(dpp: DiscreteKDpp, nu: np.ndarray | None = None) -> float:
    return float(np.max(density_ratios(dpp, nu)))


def _parallelotope_volume(vectors: np.ndarray) -> float:
    if len(vectors) == 0:
        return 1.0
    return math.sqrt(max(np.linalg.det(vectors @ vectors.T), 0.0))


def volume_decomposition_gap(vectors: np.ndarray, subspace: np.ndarray) -> float:
    """sum_v d(v, H) Vol(S - v) - Vol(S) for the rows of ``vectors``.

    ``subspace`` holds a basis of H as rows; the gap is non-negative when H
    is a (k-1)-dimensional subspace of the span of the vectors.
    """
    vectors = np.atleast_2d(np.asarray(vectors, float))
    q, _ = np.linalg.qr(np.atleast_2d(subspace).T)
    k = len(vectors)
    if q.shape[1] != k - 1:
        raise DomainError("subspace must have dimension k - 1")
    total = 0.0
    for i in range(k):
        v = vectors[i]
        dist = np.linalg.norm(v - q @ (q.T @ v))
        total += dist * _parallelotope_volume(np.delete(vectors, i, axis=0))
    return total - _parallelotope_volume(vectors)
