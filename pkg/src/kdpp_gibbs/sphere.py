"""Spherical Gaussian kernel: Mercer spectrum, threshold t, acceptance bounds.

The Gaussian kernel here is G(x, y) = exp(-|x - y|^2 / (2 sigma^2)) on
S^{d-1}.  On the sphere |x - y|^2 = 2 - 2<x, y>, so G = e^{-z} e^{z<x,y>}
with z = 1 / sigma^2, and the Funk-Hecke theorem gives eigenvalues (under
the uniform probability measure)

    mu_l = e^{-z} Gamma(d/2) (2/z)^{d/2-1} I_{l+d/2-1}(z)

with multiplicity N(d, l), the dimension of degree-l spherical harmonics.
In the usual parameterization exp(-|x-y|^2 / s^2) this is
e^{-2/s^2} s^{d-2} I_{l+d/2-1}(2/s^2) Gamma(d/2) with s = sqrt(2) sigma;
``formula_bandwidth`` is that s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolatedError, BesselRangeError, DomainError
from .kernel import Kernel, SphereDomain, gaussian_kernel

_LOG_MAX = math.log(np.finfo(float).max)


def log_bessel_i(nu: float, z: float) -> float:
    """log I_nu(z) from the power series, summed in log space."""
    if nu < 0 or z < 0:
        raise DomainError(f"need nu >= 0 and z >= 0, got nu={nu}, z={z}")
    if z == 0:
        return 0.0 if nu == 0 else -math.inf
    log_half = math.log(z / 2.0)
    # terms grow until i ~ z/2 and then decay; stop past the peak
    peak = z / 2.0
    acc = -math.inf
    i = 0
    while True:
        t = (nu + 2 * i) * log_half - math.lgamma(i + 1) - math.lgamma(nu + i + 1)
        if acc == -math.inf:
            acc = t
        else:
            hi, lo = (acc, t) if acc >= t else (t, acc)
            acc = hi + math.log1p(math.exp(lo - hi))
        if i > peak and t < acc + math.log(1e-16):
            return acc
        i += 1


def bessel_i(nu: float, z: float) -> float:
    """Modified Bessel function of the first kind, I_nu(z)."""
    v = log_bessel_i(nu, z)
    if v > _LOG_MAX:
        raise BesselRangeError(f"I_{nu}({z}) overflows double precision (log = {v:.1f})")
    return math.exp(v)


def multiplicity(d: int, ell: int) -> int:
    """N(d, l) = (2l + d - 2)(l + d - 3)! / (l! (d - 2)!), exact integers."""
    if d < 2 or ell < 0:
        raise DomainError(f"need d >= 2 and l >= 0, got d={d}, l={ell}")
    if d == 2:
        return 1 if ell == 0 else 2
    num = (2 * ell + d - 2) * math.factorial(ell + d - 3)
    den = math.factorial(ell) * math.factorial(d - 2)
    q, rem = divmod(num, den)
    assert rem == 0
    return q


def formula_bandwidth(sigma: float) -> float:
    return math.sqrt(2.0) * sigma


def log_eigenvalue(d: int, sigma: float, ell: int) -> float:
    s = formula_bandwidth(sigma)
    z = 2.0 / (s * s)
    return -z + (d - 2) * math.log(s) + log_bessel_i(ell + d / 2.0 - 1.0, z) + math.lgamma(d / 2.0)


@dataclass(frozen=True)
class SpectralLadder:
    d: int
    sigma: float
    entries: tuple  # (ell, mu, multiplicity)
    tail_mass: float

    @property
    def ells(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries])

    @property
    def mus(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries])

    @property
    def multiplicities(self) -> list:
        return [e[2] for e in self.entries]

    @property
    def trace(self) -> float:
        return math.fsum(n * mu for _, mu, n in self.entries)

    def cumulative_trace(self) -> np.ndarray:
        return np.cumsum([n * mu for _, mu, n in self.entries])

    def squared_trace(self) -> float:
        """sum_l N(d,l) mu_l^2, the trace of the squared operator."""
        return math.fsum(n * mu * mu for _, mu, n in self.entries)


def eigen_ladder(d: int, sigma: float, ell_max: int | None = None) -> SpectralLadder:
    """Eigenvalues through ``ell_max``, or until N mu < 1e-14 three times running."""
    if d < 2:
        raise DomainError("d must be at least 2")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    entries = []
    small = 0
    ell = 0
    while True:
        n = multiplicity(d, ell)
        mu = math.exp(log_eigenvalue(d, sigma, ell))
        entries.append((ell, mu, n))
        if ell_max is not None:
            if ell >= ell_max:
                break
        else:
            small = small + 1 if n * mu < 1e-14 else 0
            if small >= 3:
                break
        ell += 1
    total = math.fsum(n * mu for _, mu, n in entries)
    return SpectralLadder(d, sigma, tuple(entries), 1.0 - total)


def eigenvalue_bracket(d: int, sigma: float, ell: int) -> tuple:
    """Closed-form lower/upper bounds on mu_l (A1 and A2 constants).

    Evaluated in the formula's own bandwidth s = sqrt(2) sigma.
    """
    s = formula_bandwidth(sigma)
    log_a1 = (
        -2.0 / s**2
        - 1.0 / 12.0
        - 0.5 * math.log(math.pi)
        + (d / 2.0 - 1.0) * math.log(2.0 * math.e)
        + math.lgamma(d / 2.0)
    )
    log_a2 = log_a1 + 1.0 / 12.0 + 1.0 / s**4
    base = ell * math.log(2.0 * math.e / s**2) - (ell + (d - 1) / 2.0) * math.log(2 * ell + d - 2)
    return math.exp(base + log_a1), math.exp(base + log_a2)


def threshold_t(d: int, k: int) -> int:
    """Smallest t >= 1 with d^t / t! >= 2k (searched up to t = d)."""
    if d < 1 or k < 0:
        raise DomainError(f"need d >= 1 and k >= 0, got d={d}, k={k}")
    target = math.log(2 * k) if k > 0 else -math.inf
    for t in range(1, d + 1):
        if t * math.log(d) - math.lgamma(t + 1) >= target - 1e-12:
            return t
    raise AssumptionViolatedError(
        f"d^t/t! < 2k = {2 * k} for every t <= d={d} (k exceeds exp(d/4) regime)"
    )


def top_eigenvalue_sum(ladder: SpectralLadder, k: int) -> float:
    """Sum of the k largest eigenvalues counted with multiplicity."""
    remaining = k
    total = 0.0
    for _, mu, n in sorted(ladder.entries, key=lambda e: -e[1]):
        if remaining <= 0:
            break
        take = min(n, remaining)
        total += take * mu
        remaining -= take
    if remaining > 0:
        raise DomainError(f"ladder holds fewer than k={k} eigenvalues")
    return total


def acceptance_lower_bound(d: int, k: int, sigma: float, ladder: SpectralLadder | None = None) -> float:
    """Certified lower bound on the per-proposal acceptance of the rejection sampler.

    For any k conditioning points the acceptance probability is the trace
    of the residual kernel, which is at least the sum of all but the k
    largest eigenvalues.  Eigenvalues beyond the computed ladder are
    dropped, which only lowers the bound.
    """
    if k < 0:
        raise DomainError("k must be non-negative")
    if k > 0:
        threshold_t(d, k)
    ladder = eigen_ladder(d, sigma) if ladder is None else ladder
    if k == 0:
        return min(1.0, ladder.trace)
    return max(0.0, ladder.trace - top_eigenvalue_sum(ladder, k))


def coarse_rate_bound(d: int, k: int, sigma: float) -> float:
    """e^{-2/s^2} / (t! s^{2t}) with s = sqrt(2) sigma, the coarse rate without constants."""
    s = formula_bandwidth(sigma)
    t = threshold_t(d, k)
    return math.exp(-2.0 / s**2 - math.lgamma(t + 1) - 2 * t * math.log(s))


def small_sigma_threshold(k: int) -> float:
    """sigma = 1 / (2 sqrt(log k)), below which the bound is at least 1 - 1/sqrt(k)."""
    if k < 2:
        raise DomainError("k must be at least 2")
    return 1.0 / (2.0 * math.sqrt(math.log(k)))


def uniform_sphere(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    if d < 1:
        raise DomainError("d must be at least 1")
    return SphereDomain(d).sample(rng, size)


def sphere_gaussian_kernel(d: int, sigma: float) -> Kernel:
    return gaussian_kernel(sigma, SphereDomain(d))
