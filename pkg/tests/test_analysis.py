import itertools
import json
import math

import numpy as np
import pytest

from kdpp_gibbs.analysis import (
    _milp_conductance,
    _support,
    _sweep_conductance,
    analyze_chain,
    cheeger_check,
    conductance_exact,
    cut_flow,
    dirichlet_form,
    empirical_mixing,
    gibbs_transition,
    mihail_check,
    poincare_exact,
    sampling_slack,
    spectral_gap,
    spectrum,
    total_variation,
    tv_decay,
    variance,
    variance_contraction_check,
    verify_conductance_theorem,
)
from kdpp_gibbs.chain import GibbsChain, make_state
from kdpp_gibbs.conditional import exact_oracle
from kdpp_gibbs.discrete import enumerate_pmf, exact_sample
from kdpp_gibbs.errors import CapacityError, DomainError, VerificationError
from kdpp_gibbs.kernel import matrix_kernel
from kdpp_gibbs.warmstart import greedy_pmf_exact


def brute_conductance(P, pi):
    """Loop over every subset with 0 < pi(S) <= 1/2, plain Python sums."""
    m = len(pi)
    best = math.inf
    for r in range(1, m):
        for S in itertools.combinations(range(m), r):
            mass = sum(pi[i] for i in S)
            if mass > 0.5 + 1e-15 or mass == 0:
                continue
            out = [j for j in range(m) if j not in S]
            q = sum(pi[i] * P[i][j] for i in S for j in out)
            best = min(best, q / mass)
    return best


def two_state():
    return gibbs_transition(np.diag([2.0, 1.0]), 1)


def test_two_state_by_hand():
    dpp, P = two_state()
    cond = conductance_exact(P, dpp.pmf)
    assert cond.phi == pytest.approx(1 / 3)
    assert dpp.states[cond.cut[0]] == (1,)
    assert poincare_exact(P, dpp.pmf) == pytest.approx(0.5)
    assert spectral_gap(P, dpp.pmf) == pytest.approx(0.5)


@pytest.mark.parametrize("n", [3, 4, 5, 8])
def test_identity_k1_closed_form(n):
    dpp, P = gibbs_transition(np.eye(n), 1)
    phi = conductance_exact(P, dpp.pmf).phi
    assert phi == pytest.approx((n - n // 2) / (2 * n))
    # P = I/2 + J/(2n): eigenvalues 1 and 1/2
    assert poincare_exact(P, dpp.pmf) == pytest.approx(0.5)


@pytest.mark.parametrize("n,k,seed", [(4, 2, 0), (5, 2, 1), (5, 3, 2), (6, 1, 3), (4, 3, 4)])
def test_conductance_matches_brute_force(psd, n, k, seed):
    dpp, P = gibbs_transition(psd(n, seed), k)
    assert conductance_exact(P, dpp.pmf).phi == pytest.approx(brute_conductance(P, dpp.pmf), rel=1e-12)


def test_conductance_small_chunks_agree(psd):
    dpp, P = gibbs_transition(psd(6, 2), 2)
    a = conductance_exact(P, dpp.pmf).phi
    b = conductance_exact(P, dpp.pmf, chunk=7).phi
    assert a == pytest.approx(b, rel=1e-14)


def test_reported_cut_achieves_phi(psd):
    dpp, P = gibbs_transition(psd(5, 7), 2)
    cond = conductance_exact(P, dpp.pmf)
    mass = dpp.pmf[list(cond.cut)].sum()
    assert mass <= 0.5 + 1e-12
    assert cut_flow(P, dpp.pmf, cond.cut) / mass == pytest.approx(cond.phi, rel=1e-10)


def test_flow_is_symmetric_across_every_cut(psd):
    dpp, P = gibbs_transition(psd(4, 1), 2)
    comp = set(range(len(dpp.states)))
    for r in range(1, len(dpp.states)):
        for S in itertools.combinations(range(len(dpp.states)), r):
            assert cut_flow(P, dpp.pmf, S) == pytest.approx(cut_flow(P, dpp.pmf, sorted(comp - set(S))), abs=1e-15)


@pytest.mark.parametrize("n,k,seed", [(6, 2, 0), (6, 3, 1), (7, 2, 2)])
def test_milp_matches_enumeration(psd, n, k, seed):
    dpp, P = gibbs_transition(psd(n, seed), k)
    _, Ps, p = _support(P, dpp.pmf)
    phi, side = _milp_conductance(Ps, p, [0])
    assert phi == pytest.approx(conductance_exact(P, dpp.pmf).phi, rel=1e-9)
    assert p[side].sum() <= 0.5 + 1e-12


def test_milp_route_above_enumeration_limit(psd):
    dpp, P = gibbs_transition(psd(7, 4), 3)
    cond = conductance_exact(P, dpp.pmf)
    assert cond.exact and cond.method == "milp"
    sweep = conductance_exact(P, dpp.pmf, heuristic=True)
    assert cond.phi <= _sweep_conductance(*_support(P, dpp.pmf)[1:])[0] + 1e-12
    assert sweep.phi == cond.phi


def test_state_cap_without_heuristic():
    dpp, P = gibbs_transition(np.eye(12), 3)
    with pytest.raises(CapacityError):
        conductance_exact(P, dpp.pmf)
    sweep = conductance_exact(P, dpp.pmf, heuristic=True)
    assert not sweep.exact and sweep.method == "sweep" and sweep.phi > 0


def test_sweep_is_an_upper_bound(psd):
    dpp, P = gibbs_transition(psd(6, 5), 2)
    exact = conductance_exact(P, dpp.pmf).phi
    _, Ps, p = _support(P, dpp.pmf)
    assert _sweep_conductance(Ps, p)[0] >= exact - 1e-12


def test_non_reversible_chain_rejected():
    P = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    pi = np.full(3, 1 / 3)
    with pytest.raises(DomainError):
        poincare_exact(P, pi)


@pytest.mark.parametrize("seed", range(3))
def test_poincare_is_infimum_of_rayleigh_quotient(psd, seed):
    rng = np.random.default_rng(seed)
    dpp, P = gibbs_transition(psd(6, seed), 2)
    pi = dpp.pmf
    lam = poincare_exact(P, pi)
    assert lam == pytest.approx(spectral_gap(P, pi), rel=1e-9)
    for _ in range(200):
        f = rng.standard_normal(len(pi))
        assert dirichlet_form(P, pi, f) / variance(pi, f) >= lam * (1 - 1e-10)


def test_lazy_spectrum_nonnegative(psd):
    dpp, P = gibbs_transition(psd(6, 9), 3)
    assert spectrum(P, dpp.pmf)[-1] >= -1e-12


def test_cheeger_check_raises_outside_sandwich():
    cheeger_check(0.2, 0.1)
    with pytest.raises(VerificationError):
        cheeger_check(0.2, 0.5)
    with pytest.raises(VerificationError):
        cheeger_check(0.2, 0.001)


def test_tv_from_stationary_is_zero(psd):
    dpp, P = gibbs_transition(psd(5, 0), 2)
    curve = tv_decay(P, dpp.pmf, dpp.pmf, 20)
    assert max(curve.tv) < 1e-14
    assert curve.tau(0.01) == 0


def test_warm_start_curve_under_envelope(psd):
    dpp, P = gibbs_transition(psd(5, 3), 2)
    curve = tv_decay(P, dpp.pmf, greedy_pmf_exact(dpp), 60)
    assert all(t <= e * (1 + 1e-9) + 1e-13 for t, e in zip(curve.tv, curve.envelope))
    assert variance_contraction_check(P, dpp.pmf, curve) <= 1e-12


def test_point_mass_start_reaches_eps(psd):
    dpp, P = gibbs_transition(psd(5, 4), 2)
    start = np.zeros(len(dpp.pmf))
    start[0] = 1.0
    assert tv_decay(P, dpp.pmf, start, 400).tau(0.01) is not None


def test_start_on_null_state_rejected():
    m = np.eye(4)
    m[0, 1] = m[1, 0] = 1.0  # items 0 and 1 are identical
    dpp, P = gibbs_transition(m, 2)
    start = np.zeros(len(dpp.pmf))
    start[dpp.index_of((0, 1))] = 1.0
    assert dpp.prob((0, 1)) == 0.0
    with pytest.raises(DomainError):
        tv_decay(P, dpp.pmf, start, 5)


def test_mihail_identity(psd):
    rng = np.random.default_rng(0)
    dpp, P = gibbs_transition(psd(6, 8), 3)
    assert mihail_check(P, dpp.pmf, np.ones(len(dpp.pmf))) < 1e-14
    for _ in range(50):
        assert mihail_check(P, dpp.pmf, rng.standard_normal(len(dpp.pmf))) < 1e-10


def test_conductance_theorem_on_identity_and_near_singular():
    eps = 1e-6
    near = np.eye(4)
    near[0, 1] = near[1, 0] = 1 - eps
    report = verify_conductance_theorem([(np.eye(5), 1), (np.eye(5), 2), (near, 2)])
    assert report["min_phi_k2"] >= 1 / 64
    assert len(report["rows"]) == 3


def test_empirical_mixing_from_exact_start_is_immediate(psd, rng):
    m = psd(5, 2)
    kern = matrix_kernel(m)
    dpp = enumerate_pmf(kern, 2)
    chain = GibbsChain(kern, 2, exact_oracle(kern))
    est = empirical_mixing(chain, lambda r: make_state(kern, exact_sample(dpp, r)), 0.05, 2000, rng, dpp)
    assert est.tau == 0


def test_sampling_slack_scales_as_inverse_sqrt(psd, rng):
    pmf = enumerate_pmf(psd(6, 0), 2).pmf
    ratio = sampling_slack(pmf, 1000, rng, draws=400) / sampling_slack(pmf, 2000, rng, draws=400)
    assert 1.2 < ratio < 1.7


def test_analyze_chain_report_serializes(psd):
    rep = analyze_chain(psd(5, 6), 2, steps=30)
    data = json.loads(rep.to_json())
    assert data["instance"]["n"] == 5 and len(data["tv_curve"]) == 31
    assert data["phi"] ** 2 / 8 <= data["lambda"] <= 2 * data["phi"]
    assert rep.curves_csv().splitlines()[0] == "step,tv,envelope,variance"
    assert total_variation(np.asarray(data["stationary"]), rep.stationary) == 0.0
