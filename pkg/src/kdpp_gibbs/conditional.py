"""Samplers for the one-point conditional CD(S, 1): density of y ~ det_L(S + y).

Two kinds: an exact oracle for finite ground sets (normalize the residuals
over every element) and a rejection sampler for kernels with diagonal
bounded by one: propose y uniformly on the domain, accept with probability
det_ratio(S, y).  Proposals are drawn in geometric batches; returning the
first accepted proposal of a batch is distributionally the same as the
one-at-a-time loop and keeps the trial count exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OracleBudgetError, SingularViewError, UnsupportedDomainError
from .kernel import BoxDomain, FiniteDomain, GramView, Kernel, SphereDomain, det_ratios

EXACT = "exact-discrete"
REJECTION = "rejection-continuous"
DEFAULT_MAX_TRIALS = 10**6
_COMPACT_DOMAINS = (FiniteDomain, SphereDomain, BoxDomain)


@dataclass(frozen=True)
class ConditionalOracle:
    kind: str
    kernel: Kernel
    max_trials: int = DEFAULT_MAX_TRIALS

    def __post_init__(self):
        if self.kind == EXACT:
            if not isinstance(self.kernel.domain, FiniteDomain):
                raise UnsupportedDomainError("exact oracle needs a finite ground set")
        elif self.kind == REJECTION:
            if not isinstance(self.kernel.domain, _COMPACT_DOMAINS):
                raise UnsupportedDomainError(
                    f"no uniform proposal for domain {self.kernel.domain!r}"
                )
            if self.kernel.diag_bound > 1.0 + 1e-12:
                raise DomainError(
                    f"rejection sampling needs L(z,z) <= 1, diag_bound={self.kernel.diag_bound}"
                )
        else:
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.max_trials < 1:
            raise ValueError("max_trials must be positive")

    @property
    def proposal(self):
        return self.kernel.domain

    def draw(self, view: GramView, rng: np.random.Generator):
        return draw_conditional(self, view, rng)


def exact_oracle(kernel: Kernel) -> ConditionalOracle:
    return ConditionalOracle(EXACT, kernel)


def rejection_oracle(kernel: Kernel, max_trials: int = DEFAULT_MAX_TRIALS) -> ConditionalOracle:
    return ConditionalOracle(REJECTION, kernel, max_trials)


def exact_conditional_probs(view: GramView) -> np.ndarray:
    """pmf over the ground set proportional to det_L(points + y)."""
    n = view.kernel.domain.n
    r = det_ratios(view, np.arange(n))
    if view.points:
        r[np.asarray(view.points, dtype=np.intp)] = 0.0
    total = r.sum()
    if not total > 0:
        raise DomainError(f"no element extends {view.points} with positive density")
    return r / total


def _draw_exact(oracle, view, rng):
    p = exact_conditional_probs(view)
    cdf = np.cumsum(p)
    y = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(y, len(p) - 1), 1


def _draw_rejection(oracle, view, rng):
    domain = oracle.proposal
    trials = 0
    ratio_sum = 0.0
    batch = 8
    while trials < oracle.max_trials:
        m = min(batch, oracle.max_trials - trials)
        ys = domain.sample(rng, m)
        u = rng.random(m)
        r = det_ratios(view, ys)
        hits = np.flatnonzero(u <= r)
        # u == 0 with r == 0 would accept a zero-density point
        hits = hits[r[hits] > 0]
        if hits.size:
            j = int(hits[0])
            return ys[j], trials + j + 1
        trials += m
        ratio_sum += float(r.sum())
        batch = min(batch * 2, 4096)
    raise OracleBudgetError(trials, ratio_sum / max(trials, 1))


def draw_conditional(oracle: ConditionalOracle, view: GramView, rng: np.random.Generator):
    """Draw y ~ CD(points(view), 1); returns ``(y, trials)``."""
    if view.singular:
        raise SingularViewError("conditioning set has zero density")
    if oracle.kind == EXACT:
        return _draw_exact(oracle, view, rng)
    return _draw_rejection(oracle, view, rng)


@dataclass(frozen=True)
class TrialEstimate:
    """Monte Carlo estimate of E[T] = 1 / E_y[det_ratio(view, y)]."""

    expected_trials: float
    stderr: float
    acceptance: float
    acceptance_stderr: float
    samples: int

    @property
    def infinite(self) -> bool:
        return not np.isfinite(self.expected_trials)


def expected_trials(view: GramView, domain, mc_budget: int, rng: np.random.Generator) -> TrialEstimate:
    if view.singular:
        raise SingularViewError("conditioning set has zero density")
    if mc_budget < 1:
        raise ValueError("mc_budget must be positive")
    r = det_ratios(view, domain.sample(rng, mc_budget))
    acc = float(r.mean())
    acc_se = float(r.std(ddof=1) / np.sqrt(mc_budget)) if mc_budget > 1 else float("inf")
    if acc == 0.0:
        return TrialEstimate(float("inf"), float("inf"), 0.0, acc_se, mc_budget)
    return TrialEstimate(1.0 / acc, acc_se / acc**2, acc, acc_se, mc_budget)
