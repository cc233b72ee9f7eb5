"""PSD kernels, their domains, and incremental Gram determinant algebra.

A :class:`GramView` keeps the lower Cholesky factor of the Gram matrix of an
ordered list of points.  Adding a point costs one triangular solve, removing
one costs a rank-one update of the trailing block, so a Gibbs move is
O(k^2) instead of refactorizing in O(k^3).  ``det_ratio`` is the squared
residual of the new feature vector after projecting out the span of the
current ones, which is exactly the acceptance probability of the rejection
sampler when the kernel diagonal is bounded by one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import KernelEvaluationError, SingularViewError

# pivot (squared residual) below this fraction of diag_bound counts as singular
PIVOT_RTOL = 1e-12


class Domain:
    """Where kernel points live; also the uniform proposal of the rejection sampler."""

    compact = False

    def sample(self, rng: np.random.Generator, size: int | None = None):
        raise NotImplementedError

    def stack(self, points: Sequence) -> np.ndarray:
        return np.asarray(points)


@dataclass(frozen=True)
class FiniteDomain(Domain):
    """Ground set {0, ..., n-1}."""

    n: int
    compact = True

    def sample(self, rng, size=None):
        return rng.integers(self.n, size=size)

    def stack(self, points):
        return np.asarray(points, dtype=np.intp).reshape(-1)


@dataclass(frozen=True)
class SphereDomain(Domain):
    """Unit sphere S^{d-1} in R^d."""

    d: int
    compact = True

    def sample(self, rng, size=None):
        # normalized standard normals; the all-zero draw has probability zero
        # but is redrawn anyway so the output is always unit norm
        shape = (1 if size is None else size, self.d)
        z = rng.standard_normal(shape)
        norms = np.linalg.norm(z, axis=1)
        while np.any(norms == 0.0):
            bad = norms == 0.0
            z[bad] = rng.standard_normal((int(bad.sum()), self.d))
            norms = np.linalg.norm(z, axis=1)
        out = z / norms[:, None]
        return out[0] if size is None else out

    def stack(self, points):
        return np.asarray(points, dtype=float).reshape(-1, self.d)


@dataclass(frozen=True)
class BoxDomain(Domain):
    """Axis-aligned box [lo, hi] in R^d."""

    lo: tuple
    hi: tuple
    compact = True

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("box needs matching lo/hi with lo < hi")

    @property
    def d(self) -> int:
        return len(self.lo)

    def sample(self, rng, size=None):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        shape = (self.d,) if size is None else (size, self.d)
        return lo + (hi - lo) * rng.random(shape)

    def stack(self, points):
        return np.asarray(points, dtype=float).reshape(-1, self.d)


@dataclass(frozen=True)
class Kernel:
    """Symmetric PSD kernel L(x, y) over a domain.

    ``cross`` is an optional vectorized evaluator returning the full matrix
    L(xs[i], ys[j]) for stacked point arrays; ``matrix`` falls back to the
    scalar ``evaluator`` when it is absent.
    """

    evaluator: Callable[[Any, Any], float]
    domain: Domain
    diag_bound: float
    cross: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )
    diagonal: Callable[[Sequence], np.ndarray] | None = field(default=None, compare=False)
    name: str = "kernel"
    values: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __call__(self, x, y) -> float:
        v = float(self.evaluator(x, y))
        if not np.isfinite(v):
            raise KernelEvaluationError(x, y, v)
        return v

    def matrix(self, xs: Sequence, ys: Sequence | None = None) -> np.ndarray:
        """Kernel matrix between two point lists (Gram matrix when ``ys`` is None)."""
        if ys is None:
            ys = xs
        if len(xs) == 0 or len(ys) == 0:
            return np.zeros((len(xs), len(ys)))
        if self.cross is not None:
            out = np.asarray(
                self.cross(self.domain.stack(xs), self.domain.stack(ys)), dtype=float
            )
        else:
            out = np.array([[float(self.evaluator(x, y)) for y in ys] for x in xs])
        if not np.all(np.isfinite(out)):
            i, j = np.argwhere(~np.isfinite(out))[0]
            raise KernelEvaluationError(xs[i], ys[j], out[i, j])
        return out

    def diag(self, ys: Sequence) -> np.ndarray:
        if self.diagonal is not None:
            return np.asarray(self.diagonal(ys), dtype=float)
        return np.array([self(y, y) for y in ys])


def matrix_kernel(matrix, name: str = "matrix") -> Kernel:
    """Kernel backed by an explicit symmetric PSD matrix over a finite ground set."""
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"kernel matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        i, j = np.argwhere(~np.isfinite(m))[0]
        raise KernelEvaluationError(int(i), int(j), m[i, j])
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError("kernel matrix is not symmetric")
    m.setflags(write=False)

    def cross(a, b):
        return m[np.ix_(a, b)]

    def diag(ys):
        return m[np.asarray(ys, dtype=np.intp), np.asarray(ys, dtype=np.intp)]

    return Kernel(
        evaluator=lambda i, j: m[i, j],
        domain=FiniteDomain(m.shape[0]),
        diag_bound=float(np.max(np.diag(m))),
        cross=cross,
        diagonal=diag,
        name=name,
        values=m,
    )


def identity_kernel(n: int) -> Kernel:
    return matrix_kernel(np.eye(n), name=f"identity({n})")


def gaussian_kernel(sigma: float, domain: Domain) -> Kernel:
    """exp(-|x - y|^2 / (2 sigma^2)); unit diagonal, so diag_bound is exactly 1."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    scale = 1.0 / (2.0 * sigma * sigma)

    def evaluator(x, y):
        diff = np.asarray(x, float) - np.asarray(y, float)
        return float(np.exp(-scale * diff.dot(diff)))

    def cross(a, b):
        sq = (
            np.einsum("ij,ij->i", a, a)[:, None]
            + np.einsum("ij,ij->i", b, b)[None, :]
            - 2.0 * a @ b.T
        )
        return np.exp(-scale * np.maximum(sq, 0.0))

    return Kernel(
        evaluator,
        domain,
        1.0,
        cross,
        diagonal=lambda ys: np.ones(len(ys)),
        name=f"gaussian(sigma={sigma!r})",
    )


def gram_det(kernel: Kernel, points: Sequence) -> float:
    """Determinant of the Gram matrix, recomputed from scratch (1 for no points)."""
    if len(points) == 0:
        return 1.0
    return float(np.linalg.det(kernel.matrix(points)))


@dataclass(frozen=True, eq=False)
class GramView:
    """Cholesky factor of the Gram matrix of ``points`` (insertion order).

    ``log_det`` is ``-inf`` when some pivot fell below the singularity
    tolerance; the factor is then only kept for bookkeeping.
    """

    kernel: Kernel
    points: tuple
    chol: np.ndarray
    log_det: float

    def __len__(self):
        return len(self.points)

    @property
    def singular(self) -> bool:
        return not np.isfinite(self.log_det)

    @property
    def det(self) -> float:
        return float(np.exp(self.log_det))

    def gram(self) -> np.ndarray:
        return self.chol @ self.chol.T


def empty_view(kernel: Kernel) -> GramView:
    return GramView(kernel, (), np.zeros((0, 0)), 0.0)


def _residuals(view: GramView, ys: Sequence):
    """Return (squared residuals, projection coefficients) for candidate points."""
    kern = view.kernel
    diag = np.asarray(kern.diag(ys), dtype=float)
    if len(view.points) == 0:
        return diag, np.zeros((0, len(diag)))
    b = kern.matrix(view.points, ys)
    c = solve_triangular(view.chol, b, lower=True, check_finite=False)
    return diag - np.einsum("ij,ij->j", c, c), c


def det_ratios(view: GramView, ys: Sequence) -> np.ndarray:
    """Vectorized :func:`det_ratio` over many candidate points."""
    if view.singular:
        raise SingularViewError("det_ratio needs a nonsingular view")
    r = np.array(_residuals(view, ys)[0], dtype=float)
    # below the pivot tolerance (including negative cancellation noise) the
    # extended set is singular under ``extend``, so its density is zero
    r[r < PIVOT_RTOL * view.kernel.diag_bound] = 0.0
    return r


def det_ratio(view: GramView, y) -> float:
    """det_L(points + y) / det_L(points), via one forward solve."""
    return float(det_ratios(view, [y])[0])


def extend(view: GramView, y) -> GramView:
    """Append ``y``; the result is singular if the new pivot is below tolerance."""
    r, c = _residuals(view, [y])
    pivot = float(r[0])
    k = len(view.points)
    chol = np.zeros((k + 1, k + 1))
    chol[:k, :k] = view.chol
    chol[k, :k] = c[:, 0]
    tol = PIVOT_RTOL * view.kernel.diag_bound
    if view.singular or pivot < tol:
        chol[k, k] = np.sqrt(max(pivot, 0.0))
        log_det = -np.inf
    else:
        chol[k, k] = np.sqrt(pivot)
        log_det = view.log_det + np.log(pivot)
    return GramView(view.kernel, view.points + (y,), chol, log_det)


def gram_view(kernel: Kernel, points: Sequence) -> GramView:
    view = empty_view(kernel)
    for p in points:
        view = extend(view, p)
    return view


def _chol_rank_one_update(chol: np.ndarray, x: np.ndarray) -> None:
    """In place: chol chol^T + x x^T, lower triangular."""
    x = x.copy()
    for j in range(chol.shape[0]):
        ljj = chol[j, j]
        r = np.hypot(ljj, x[j])
        c = r / ljj
        s = x[j] / ljj
        chol[j, j] = r
        if j + 1 < chol.shape[0]:
            chol[j + 1 :, j] = (chol[j + 1 :, j] + s * x[j + 1 :]) / c
            x[j + 1 :] = c * x[j + 1 :] - s * chol[j + 1 :, j]


def downdate(view: GramView, index: int) -> GramView:
    """Drop the point at ``index``; the trailing block absorbs the removed column."""
    k = len(view.points)
    if not 0 <= index < k:
        raise IndexError(f"index {index} out of range for view of size {k}")
    points = view.points[:index] + view.points[index + 1 :]
    if view.singular:
        return gram_view(view.kernel, points)
    chol = np.delete(np.delete(view.chol, index, axis=0), index, axis=1)
    if index < k - 1:
        _chol_rank_one_update(chol[index:, index:], view.chol[index + 1 :, index])
    log_det = float(2.0 * np.sum(np.log(np.diag(chol)))) if k > 1 else 0.0
    return GramView(view.kernel, points, chol, log_det)
