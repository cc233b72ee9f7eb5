"""Gibbs (heat-bath) sampler for k-DPPs.

One move removes a uniformly chosen point and redraws it from the
one-point conditional given the remaining k-1 points.  Chains are lazy by
default (hold with probability 1/2), which is what the spectral mixing
argument needs; ``lazy=False`` gives the plain heat-bath move.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .conditional import ConditionalOracle
from .discrete import DiscreteKDpp
from .errors import DomainError, OracleBudgetError
from .kernel import GramView, Kernel, PIVOT_RTOL, downdate, extend, gram_view


@dataclass(frozen=True, eq=False)
class PointConfig:
    """A chain state: k points with the Gram factorization over them."""

    view: GramView

    @property
    def points(self) -> tuple:
        return self.view.points

    @property
    def k(self) -> int:
        return len(self.view.points)

    def key(self) -> tuple:
        """Order-independent identity for discrete states."""
        return tuple(sorted(int(p) for p in self.view.points))

    def __len__(self):
        return self.k


def make_state(kernel: Kernel, points: Sequence) -> PointConfig:
    view = gram_view(kernel, list(points))
    if view.singular:
        raise DomainError(f"state {tuple(points)!r} has zero density")
    return PointConfig(view)


class GibbsChain:
    def __init__(
        self,
        kernel: Kernel,
        k: int,
        oracle: ConditionalOracle,
        lazy: bool = True,
        rng: np.random.Generator | int | None = None,
    ):
        if k < 1:
            raise ValueError("k must be at least 1")
        if oracle.kernel is not kernel:
            raise ValueError("oracle must be built on the chain's kernel")
        self.kernel = kernel
        self.k = k
        self.oracle = oracle
        self.lazy = lazy
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.step_count = 0
        self.total_trials = 0
        self.total_trials_sq = 0
        self.oracle_calls = 0

    def spawn(self, rng: np.random.Generator) -> "GibbsChain":
        """Same chain definition with a fresh RNG stream and zeroed counters."""
        return GibbsChain(self.kernel, self.k, self.oracle, self.lazy, rng)

    def step(self, state: PointConfig) -> PointConfig:
        if state.k != self.k:
            raise DomainError(f"state has {state.k} points, chain expects {self.k}")
        self.step_count += 1
        if self.lazy and self.rng.random() < 0.5:
            return state
        i = int(self.rng.integers(self.k))
        rest = downdate(state.view, i)
        try:
            y, trials = self.oracle.draw(rest, self.rng)
        except OracleBudgetError as exc:
            raise exc.with_context(coordinate=i, state=state.points) from None
        self.total_trials += trials
        self.total_trials_sq += trials * trials
        self.oracle_calls += 1
        new = extend(rest, y)
        if new.singular:
            raise AssertionError(
                f"oracle returned zero-density point {y!r} (pivot < {PIVOT_RTOL})"
            )
        return PointConfig(new)

    def run(
        self,
        start: PointConfig,
        steps: int,
        thin: int = 1,
        callback: Callable[[int, PointConfig], None] | None = None,
    ) -> list:
        """Advance ``steps`` moves; keeps the start and every ``thin``-th state.

        With ``callback`` set, states are streamed to it instead of stored.
        """
        if steps < 0 or thin < 1:
            raise ValueError("steps must be >= 0 and thin >= 1")
        out = []
        emit = callback if callback is not None else (lambda t, s: out.append(s))
        emit(0, start)
        state = start
        for t in range(1, steps + 1):
            state = self.step(state)
            if t % thin == 0:
                emit(t, state)
        return out


def exact_transition_matrix(chain: GibbsChain, dpp: DiscreteKDpp) -> np.ndarray:
    """Row-stochastic transition matrix over ``dpp.states``.

    Computed from the enumerated determinants only, independent of the
    Cholesky machinery the sampler uses.
    """
    if chain.k != dpp.k:
        raise DomainError(f"chain k={chain.k} but dpp k={dpp.k}")
    k, n = dpp.k, dpp.n
    size = len(dpp.states)
    index = {s: i for i, s in enumerate(dpp.states)}
    weights = dpp.pmf
    move = np.zeros((size, size))
    for a, x in enumerate(dpp.states):
        for i in range(k):
            rest = x[:i] + x[i + 1 :]
            targets = [index[tuple(sorted(rest + (y,)))] for y in range(n) if y not in rest]
            w = weights[targets]
            total = w.sum()
            if total > 0:
                move[a, targets] += w / (k * total)
            else:
                # unreachable from the support; keep the row stochastic
                move[a, a] += 1.0 / k
    hold = 0.5 if chain.lazy else 0.0
    return hold * np.eye(size) + (1.0 - hold) * move
