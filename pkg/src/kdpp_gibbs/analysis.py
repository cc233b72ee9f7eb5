"""Exact spectral and isoperimetric analysis of small reversible chains.

Everything works on an explicit transition matrix ``P`` over enumerated
states and its stationary vector ``pi``.  States with ``pi == 0`` are
dropped before any cut or eigen computation; for Gibbs chains they are
unreachable from the support.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .chain import GibbsChain, PointConfig, exact_transition_matrix
from .conditional import exact_oracle
from .discrete import DiscreteKDpp, enumerate_pmf
from .errors import CapacityError, DomainError, VerificationError
from .kernel import matrix_kernel
from .warmstart import MAX_GREEDY_K, greedy_pmf_exact

MAX_EXACT_CUT_STATES = 24
MAX_MILP_STATES = 128
MAX_SWEEP_STATES = 5000
C_TEST = 64.0
LAZINESS_NOTE = (
    "lazy chain: holds with probability 1/2, so every ergodic flow carries a "
    "factor 1/(2k) per single-point move"
)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _support(P, pi):
    pi = np.asarray(pi, dtype=float)
    idx = np.flatnonzero(pi > 0)
    return idx, np.asarray(P)[np.ix_(idx, idx)], pi[idx]


def flow_matrix(P, pi) -> np.ndarray:
    """Q(x, y) = pi(x) P(x, y)."""
    return np.asarray(pi)[:, None] * np.asarray(P)


def detailed_balance_error(P, pi) -> float:
    f = flow_matrix(P, pi)
    return float(np.abs(f - f.T).max())


def stationarity_error(P, pi) -> float:
    return float(np.abs(np.asarray(pi) @ np.asarray(P) - pi).max())


def _require_reversible(P, pi, tol=1e-10):
    err = detailed_balance_error(P, pi)
    if err > tol:
        raise DomainError(f"chain is not reversible (detailed balance error {err:.3e})")


def cut_flow(P, pi, S: Sequence[int]) -> float:
    """Q(S, S-bar): stationary mass crossing out of S in one step."""
    mask = np.zeros(len(pi), dtype=bool)
    mask[list(S)] = True
    f = flow_matrix(P, pi)
    return float(f[np.ix_(mask, ~mask)].sum())


@dataclass(frozen=True)
class Conductance:
    phi: float
    cut: tuple  # state indices of the minimizing side (pi(cut) <= 1/2)
    exact: bool
    method: str = "enumeration"


def _sweep_conductance(Ps, p):
    root = np.sqrt(p)
    a = root[:, None] * Ps / root[None, :]
    a = 0.5 * (a + a.T)
    _, vecs = np.linalg.eigh(a)
    order = np.argsort(vecs[:, -2] / root)
    f = p[:, None] * Ps
    best, best_k = math.inf, 1
    inside = np.zeros(len(p), dtype=bool)
    q = 0.0
    mass = 0.0
    for j, x in enumerate(order[:-1]):
        # adding x: its flow to the outside joins, flow from the inside to x leaves
        q += f[x, ~inside].sum() - f[x, x] - f[inside, x].sum()
        inside[x] = True
        mass += p[x]
        ratio = q / min(mass, 1.0 - mass)
        if ratio < best:
            best, best_k = ratio, j + 1
    side = order[:best_k]
    if p[side].sum() > 0.5:
        side = order[best_k:]
    return best, side


def _milp_conductance(Ps, p, start_side, max_rounds: int = 50):
    """Dinkelbach iteration: minimize Q(S, S-bar) - c pi(S) over pi(S) <= 1/2 by MILP.

    Each round either finds a cut with ratio below c or certifies that none
    exists (up to the solver's optimality tolerance), so the returned cut
    attains the conductance.
    """
    m = len(p)
    f = p[:, None] * Ps
    f = 0.5 * (f + f.T)
    iu, ju = np.nonzero(np.triu(f, 1) > 0)
    w = f[iu, ju]
    ne = len(w)
    # e_xy >= |s_x - s_y| as two inequalities per edge
    rows = np.repeat(np.arange(2 * ne), 3)
    cols = np.column_stack([m + np.repeat(np.arange(ne), 2), np.repeat(iu, 2), np.repeat(ju, 2)]).ravel()
    sign = np.tile([1.0, -1.0, 1.0, 1.0, 1.0, -1.0], ne)
    A = coo_matrix((sign, (rows, cols)), shape=(2 * ne, m + ne)).tocsr()
    pad = np.zeros(ne)
    constraints = [
        LinearConstraint(A, 0.0, np.inf),
        LinearConstraint(np.concatenate([p, pad])[None, :], 0.0, 0.5),
        LinearConstraint(np.concatenate([np.ones(m), pad])[None, :], 1.0, np.inf),
    ]
    integrality = np.concatenate([np.ones(m), pad])

    def ratio(mask):
        return float(f[np.ix_(mask, ~mask)].sum() / p[mask].sum())

    side = np.zeros(m, dtype=bool)
    side[start_side] = True
    best = ratio(side)
    for _ in range(max_rounds):
        res = milp(
            np.concatenate([-best * p, w]),
            constraints=constraints,
            integrality=integrality,
            bounds=Bounds(0.0, 1.0),
            options={"mip_rel_gap": 0.0},
        )
        if not res.success:
            raise RuntimeError(f"conductance MILP failed: {res.message}")
        cand = res.x[:m] > 0.5
        r = ratio(cand)
        if r >= best * (1 - 1e-12):
            return best, np.flatnonzero(side)
        best, side = r, cand
    raise RuntimeError("conductance MILP did not converge")


def conductance_exact(P, pi, heuristic: bool = False, chunk: int = 1 << 16) -> Conductance:
    """min over cuts with 0 < pi(S) <= 1/2 of Q(S, S-bar) / pi(S).

    Exhaustive over all 2^(m-1) cuts of the m support states (m <= 24);
    cuts and complements are paired since Q(S, S-bar) = Q(S-bar, S).
    Up to 128 states the minimum is found by mixed-integer programming,
    seeded with the spectral sweep cut.  Beyond that, ``heuristic`` allows
    the sweep alone (up to 5000 states), which is an upper bound only.
    """
    idx, Ps, p = _support(P, pi)
    m = len(idx)
    if m < 2:
        raise DomainError("conductance needs at least two states of positive mass")
    if m > MAX_EXACT_CUT_STATES:
        phi, side = _sweep_conductance(Ps, p)
        if m <= MAX_MILP_STATES:
            phi, side = _milp_conductance(Ps, p, side)
            return Conductance(float(phi), tuple(int(i) for i in idx[side]), True, "milp")
        if not heuristic:
            raise CapacityError(
                f"{m} states exceed the exact limit of {MAX_MILP_STATES} "
                "(pass heuristic=True for a sweep bound)"
            )
        if m > MAX_SWEEP_STATES:
            raise CapacityError(f"{m} states exceed the sweep budget of {MAX_SWEEP_STATES}")
        return Conductance(float(phi), tuple(int(i) for i in idx[side]), False, "sweep")

    f = p[:, None] * Ps
    f = 0.5 * (f + f.T)
    head, fh = p[:-1], f[:-1, :-1]
    shifts = np.arange(m - 1)
    total = 1 << (m - 1)
    best, best_mask = math.inf, 0
    for start in range(1, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(float)
        mass = bits @ head
        q = mass - np.einsum("ij,ij->i", bits @ fh, bits)
        ratio = q / np.minimum(mass, 1.0 - mass)
        j = int(np.argmin(ratio))
        if ratio[j] < best:
            best, best_mask = float(ratio[j]), int(masks[j])
    chosen = np.zeros(m, dtype=bool)
    chosen[:-1] = (best_mask >> shifts) & 1
    if p[chosen].sum() > 0.5:
        chosen = ~chosen
    return Conductance(max(best, 0.0), tuple(int(i) for i in idx[chosen]), exact=True)


def spectrum(P, pi) -> np.ndarray:
    """Eigenvalues (descending) of D^{1/2} P D^{-1/2} on the support."""
    _require_reversible(P, pi)
    _, Ps, p = _support(P, pi)
    root = np.sqrt(p)
    a = root[:, None] * Ps / root[None, :]
    return np.linalg.eigvalsh(0.5 * (a + a.T))[::-1]


def spectral_gap(P, pi) -> float:
    """1 - second largest eigenvalue."""
    ev = spectrum(P, pi)
    return float(1.0 - ev[1])


def poincare_exact(P, pi) -> float:
    """inf over non-constant f of E_P(f, f) / Var_pi(f).

    Solved as the generalized eigenproblem (D - Q) v = lambda D v with
    D = diag(pi), Q = pi(x) P(x, y); constants give the zero eigenvalue.
    """
    _require_reversible(P, pi)
    _, Ps, p = _support(P, pi)
    if len(p) < 2:
        raise DomainError("Poincare constant needs at least two states")
    q = p[:, None] * Ps
    q = 0.5 * (q + q.T)
    d = np.diag(p)
    vals = eigh(d - q, d, eigvals_only=True)
    return float(vals[1])


def variance(pi, f) -> float:
    pi, f = np.asarray(pi, float), np.asarray(f, float)
    mean = pi @ f
    return float(pi @ (f - mean) ** 2)


def dirichlet_form(P, pi, f) -> float:
    """E_P(f, f) = 1/2 sum_{x,y} (f(x) - f(y))^2 P(x, y) pi(x)."""
    f = np.asarray(f, float)
    diff = f[:, None] - f[None, :]
    return float(0.5 * np.sum(diff**2 * flow_matrix(P, pi)))


def mihail_check(P, pi, f) -> float:
    """|Var(f) - Var(Pf) - E_{P^2}(f, f)|."""
    _require_reversible(P, pi)
    P = np.asarray(P)
    f = np.asarray(f, float)
    return abs(variance(pi, f) - variance(pi, P @ f) - dirichlet_form(P @ P, pi, f))


def cheeger_check(phi: float, lam: float, rtol: float = 1e-10) -> None:
    """phi^2 / 8 <= lambda <= 2 phi, raising on violation."""
    lo, hi = phi * phi / 8.0, 2.0 * phi
    if lam < lo * (1 - rtol) or lam > hi * (1 + rtol):
        raise VerificationError(
            f"Cheeger sandwich violated: {lo} <= {lam} <= {hi} fails",
            {"phi": phi, "lambda": lam},
        )


@dataclass
class DecayCurve:
    steps: list
    tv: list
    envelope: list
    variance: list

    def tau(self, eps: float) -> int | None:
        """First recorded step with TV <= eps."""
        for t, v in zip(self.steps, self.tv):
            if v <= eps:
                return t
        return None


def tv_decay(P, pi, start, steps: int, lam: float | None = None, check: bool = True) -> DecayCurve:
    """Exact TV(mu P^t, pi) for t = 0..steps, with the spectral envelope.

    The envelope is 1/2 (1 - lambda)^t sqrt(Var_pi(mu / pi)); with
    ``check`` it is asserted at every step.
    """
    P = np.asarray(P, float)
    pi = np.asarray(pi, float)
    mu = np.asarray(start, float)
    null = pi <= 0
    if np.any(mu[null] > 0):
        raise DomainError("start distribution charges states of zero stationary mass")
    if lam is None:
        lam = poincare_exact(P, pi)
    supp = ~null

    def var_ratio(m):
        r = m[supp] / pi[supp]
        return float(pi[supp] @ (r - 1.0) ** 2)

    var0 = var_ratio(mu)
    curve = DecayCurve([], [], [], [])
    for t in range(steps + 1):
        tv = total_variation(mu, pi)
        env = 0.5 * (1.0 - lam) ** t * math.sqrt(var0)
        curve.steps.append(t)
        curve.tv.append(tv)
        curve.envelope.append(env)
        curve.variance.append(var_ratio(mu))
        if check and tv > env * (1 + 1e-9) + 1e-13:
            raise VerificationError(
                f"TV {tv} above envelope {env} at step {t}", {"step": t, "tv": tv, "envelope": env}
            )
        mu = mu @ P
    return curve


def variance_contraction_check(P, pi, curve: DecayCurve) -> float:
    """Max over t of Var(f_t) - (1 - lambda(P^2))^t Var(f_0); must be <= ~0."""
    P = np.asarray(P)
    lam2 = poincare_exact(P @ P, pi)
    v0 = curve.variance[0]
    return max(v - (1.0 - lam2) ** t * v0 for t, v in zip(curve.steps, curve.variance))


# ---------------------------------------------------------------------------
# chains built from kernel matrices


def gibbs_transition(matrix, k: int, lazy: bool = True):
    """(dpp, P) for the Gibbs chain of the k-DPP with this kernel matrix."""
    kern = matrix_kernel(matrix)
    dpp = enumerate_pmf(kern, k)
    chain = GibbsChain(kern, k, exact_oracle(kern), lazy=lazy, rng=0)
    return dpp, exact_transition_matrix(chain, dpp)


def verify_conductance_theorem(instances, c_test: float = C_TEST, lazy: bool = True) -> dict:
    """Exact conductance of every instance; asserts phi k^2 >= 1 / c_test."""
    rows = []
    for matrix, k in instances:
        dpp, P = gibbs_transition(matrix, k, lazy=lazy)
        cond = conductance_exact(P, dpp.pmf)
        row = {
            "n": dpp.n,
            "k": k,
            "states": int(np.count_nonzero(dpp.pmf > 0)),
            "phi": cond.phi,
            "phi_k2": cond.phi * k * k,
            "method": cond.method,
        }
        rows.append(row)
        if row["phi_k2"] < 1.0 / c_test:
            raise VerificationError(
                f"phi k^2 = {row['phi_k2']} < 1/{c_test}",
                {"kernel": np.asarray(matrix).tolist(), "k": k, "cut": cond.cut, **row},
            )
    return {
        "rows": rows,
        "min_phi_k2": min(r["phi_k2"] for r in rows),
        "c_test": c_test,
        "laziness": LAZINESS_NOTE if lazy else "non-lazy chain",
    }


# ---------------------------------------------------------------------------
# Monte Carlo mixing


@dataclass
class MixingEstimate:
    tau: int | None
    eps: float
    slack: float
    replicas: int
    tv_curve: list = field(default_factory=list)

    @property
    def crossed(self) -> bool:
        return self.tau is not None


def sampling_slack(pmf: np.ndarray, replicas: int, rng: np.random.Generator, draws: int = 200) -> float:
    """Mean TV between an empirical pmf of ``replicas`` exact draws and the pmf."""
    counts = rng.multinomial(replicas, pmf, size=draws)
    return float(np.mean(0.5 * np.abs(counts / replicas - pmf).sum(axis=1)))


def replica_rngs(rng: np.random.Generator, replicas: int) -> list:
    """Independent per-replica streams: SeedSequence(master draw).spawn(replicas)."""
    root = np.random.SeedSequence(int(rng.integers(2**63)))
    return [np.random.default_rng(s) for s in root.spawn(replicas)]


def empirical_mixing(
    chain: GibbsChain,
    start_sampler: Callable[[np.random.Generator], PointConfig],
    eps: float,
    replicas: int,
    rng: np.random.Generator,
    dpp: DiscreteKDpp,
    max_steps: int = 10_000,
    stop_at_crossing: bool = True,
) -> MixingEstimate:
    """First step where the replica empirical distribution is within eps + slack of pi."""
    if replicas < 1 or eps <= 0:
        raise ValueError("need replicas >= 1 and eps > 0")
    slack = sampling_slack(dpp.pmf, replicas, rng)
    streams = replica_rngs(rng, replicas)
    chains = [chain.spawn(s) for s in streams]
    states = [start_sampler(s) for s in streams]
    size = len(dpp.states)
    index = dpp._index

    def tv_now():
        counts = np.bincount([index[s.key()] for s in states], minlength=size)
        return total_variation(counts / replicas, dpp.pmf)

    est = MixingEstimate(None, eps, slack, replicas)
    for t in range(max_steps + 1):
        if t > 0:
            states = [c.step(s) for c, s in zip(chains, states)]
        tv = tv_now()
        est.tv_curve.append(tv)
        if est.tau is None and tv <= eps + slack:
            est.tau = t
            if stop_at_crossing:
                break
    return est


# ---------------------------------------------------------------------------
# full report


@dataclass
class ChainReport:
    n: int
    k: int
    lazy: bool
    transition: np.ndarray
    stationary: np.ndarray
    states: tuple
    conductance: float
    cut: tuple
    cut_exact: bool
    cut_method: str
    spectral_gap: float
    poincare: float
    min_eigenvalue: float
    tv_curve: list
    var_curve: list
    envelope: list
    start: str

    def to_dict(self) -> dict:
        return {
            "instance": {
                "n": self.n,
                "k": self.k,
                "lazy": self.lazy,
                "laziness": LAZINESS_NOTE if self.lazy else "non-lazy chain",
                "states": [list(s) for s in self.states],
                "start": self.start,
            },
            "phi": self.conductance,
            "cut": [list(self.states[i]) for i in self.cut],
            "cut_exact": self.cut_exact,
            "cut_method": self.cut_method,
            "lambda": self.poincare,
            "spectral_gap": self.spectral_gap,
            "min_eigenvalue": self.min_eigenvalue,
            "stationary": self.stationary.tolist(),
            "transition": self.transition.tolist(),
            "tv_curve": [[t, v] for t, v in enumerate(self.tv_curve)],
            "var_curve": [[t, v] for t, v in enumerate(self.var_curve)],
            "envelope": [[t, v] for t, v in enumerate(self.envelope)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def curves_csv(self) -> str:
        lines = ["step,tv,envelope,variance"]
        for t, (a, b, c) in enumerate(zip(self.tv_curve, self.envelope, self.var_curve)):
            lines.append(f"{t},{a!r},{b!r},{c!r}")
        return "\n".join(lines) + "\n"


def analyze_chain(matrix, k: int, steps: int = 100, lazy: bool = True, start=None) -> ChainReport:
    """Transition matrix, conductance, gap and decay curves for one instance.

    ``start`` defaults to the greedy warm-start distribution (k <= 7),
    otherwise the point mass on the most likely state.
    """
    dpp, P = gibbs_transition(matrix, k, lazy=lazy)
    pi = dpp.pmf
    cond = conductance_exact(P, pi, heuristic=True)
    lam = poincare_exact(P, pi)
    ev = spectrum(P, pi)
    if cond.exact:
        cheeger_check(cond.phi, lam)
    if start is None:
        if k <= MAX_GREEDY_K:
            start, label = greedy_pmf_exact(dpp), "greedy warm start"
        else:
            start = np.zeros(len(pi))
            start[int(np.argmax(pi))] = 1.0
            label = "point mass on the most likely state"
    else:
        label = "user supplied"
    curve = tv_decay(P, pi, start, steps, lam=lam, check=lazy)
    return ChainReport(
        n=dpp.n,
        k=k,
        lazy=lazy,
        transition=P,
        stationary=np.asarray(pi),
        states=dpp.states,
        conductance=cond.phi,
        cut=cond.cut,
        cut_exact=cond.exact,
        cut_method=cond.method,
        spectral_gap=float(1.0 - ev[1]),
        poincare=lam,
        min_eigenvalue=float(ev[-1]),
        tv_curve=curve.tv,
        var_curve=curve.variance,
        envelope=curve.envelope,
        start=label,
    )
