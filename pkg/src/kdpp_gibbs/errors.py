"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class KdppError(Exception):
    """Base class for every error raised by this package."""


class KernelEvaluationError(KdppError, ValueError):
    """A kernel returned a non-finite value."""

    def __init__(self, x, y, value):
        super().__init__(f"kernel evaluated to {value!r} at pair ({x!r}, {y!r})")
        self.pair = (x, y)
        self.value = value


class SingularViewError(KdppError, ValueError):
    """Operation needs a nonsingular Gram factorization."""


class CapacityError(KdppError):
    """Enumeration budget exceeded."""


class DomainError(KdppError, ValueError):
    """Input outside the mathematical domain of an operation."""


class AssumptionViolatedError(KdppError, ValueError):
    """A standing assumption of a bound does not hold for the inputs."""


class BesselRangeError(KdppError, OverflowError):
    """Bessel function value is not representable as a float."""


class UnsupportedDomainError(KdppError, TypeError):
    """Rejection sampling needs a compact domain with a uniform proposal."""


class VerificationError(KdppError, AssertionError):
    """A verified inequality or identity failed; carries the counterexample."""

    def __init__(self, message, counterexample=None):
        super().__init__(message)
        self.counterexample = counterexample


class OracleBudgetError(KdppError, RuntimeError):
    """Rejection sampler exhausted its trial budget.

    ``acceptance_estimate`` is the mean acceptance probability over the
    proposals that were consumed; ``context`` collects caller details such
    as the Gibbs coordinate or a partial warm-start state.
    """

    def __init__(self, trials, acceptance_estimate, context=None):
        self.trials = trials
        self.acceptance_estimate = acceptance_estimate
        self.context = dict(context or {})
        super().__init__(self._message())

    def _message(self):
        msg = (
            f"no proposal accepted after {self.trials} trials "
            f"(estimated acceptance {self.acceptance_estimate:.3e})"
        )
        if self.context:
            msg += f"; context={self.context}"
        return msg

    def with_context(self, **context):
        self.context.update(context)
        self.args = (self._message(),)
        return self
