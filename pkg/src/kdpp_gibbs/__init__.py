"""Gibbs sampling for discrete and continuous k-determinantal point processes."""

__version__ = "0.1.0"

from .analysis import (
    ChainReport,
    analyze_chain,
    conductance_exact,
    empirical_mixing,
    mihail_check,
    poincare_exact,
    tv_decay,
    verify_conductance_theorem,
)
from .chain import GibbsChain, PointConfig, exact_transition_matrix, make_state
from .conditional import (
    ConditionalOracle,
    draw_conditional,
    exact_oracle,
    expected_trials,
    rejection_oracle,
)
from .discrete import DiscreteKDpp, conditional_pmf, enumerate_pmf, exact_sample
from .kernel import (
    BoxDomain,
    FiniteDomain,
    GramView,
    Kernel,
    SphereDomain,
    det_ratio,
    downdate,
    gaussian_kernel,
    gram_det,
    gram_view,
    identity_kernel,
    matrix_kernel,
)
from .sphere import (
    SpectralLadder,
    acceptance_lower_bound,
    bessel_i,
    eigen_ladder,
    sphere_gaussian_kernel,
    threshold_t,
    uniform_sphere,
)
from .warmstart import WarmStartResult, greedy_pmf_exact, greedy_start, variance_bound_check
