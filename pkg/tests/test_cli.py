import json
import math
import shutil
import subprocess

import numpy as np
import pytest
from scipy import integrate, stats

from kdpp_gibbs.cli import main, step_budget
from kdpp_gibbs.discrete import enumerate_pmf, save_kernel_matrix
from kdpp_gibbs.formats import derive_seed, read_trajectory
from kdpp_gibbs.sphere import eigen_ladder


def run(*argv):
    return main([str(a) for a in argv])


def summary(path):
    return json.loads((path.parent / (path.name + ".summary.json")).read_text())


def angle_cdf(d, sigma):
    """CDF of t = <x, y> for a 2-DPP pair on S^{d-1}: (1 - e^{-|x-y|^2/sigma^2}) (1-t^2)^{(d-3)/2}."""

    def dens(t):
        return (1 - math.exp(-(2 - 2 * t) / sigma**2)) * (1 - t * t) ** ((d - 3) / 2)

    total = integrate.quad(dens, -1, 1)[0]
    return np.vectorize(lambda t: integrate.quad(dens, -1, t)[0] / total)


def test_step_budget_formula():
    assert step_budget(2, 0.05) == math.ceil(32 * math.log(40))
    assert step_budget(1, 0.05) == math.ceil(math.log(20))


def test_seed_derivation_is_label_separated():
    assert derive_seed(0, "gibbs") != derive_seed(0, "warm-start")
    assert derive_seed(5, "gibbs") == derive_seed(5, "gibbs")


def test_sample_sphere_k1_is_uniform(tmp_path):
    out = tmp_path / "s.txt"
    assert run("sample-sphere", "--d", 3, "--k", 1, "--sigma", 1, "--steps", 10_000, "--thin", 2,
               "--seed", 1, "--out", out) == 0
    x = np.array([s[0] for s in read_trajectory(out, discrete=False)])
    assert x.shape == (5001, 3)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-14)
    assert np.abs(x.mean(0)).max() < 0.05
    assert np.abs((x**2).mean(0) - 1 / 3).max() < 0.03
    s = summary(out)
    assert s["threshold_t"] == 1 and s["step_budget_constant_1"] == step_budget(1, 0.05)


def test_sample_sphere_pair_angles_match_quadrature(tmp_path):
    d, sigma = 4, 0.5
    out = tmp_path / "pairs.txt"
    assert run("sample-sphere", "--d", d, "--k", 2, "--sigma", sigma, "--steps", 16_000, "--burnin", 50,
               "--thin", 8, "--seed", 3, "--out", out) == 0
    states = read_trajectory(out, discrete=False)
    t = np.array([a @ b for a, b in states])
    assert stats.kstest(t, angle_cdf(d, sigma)).pvalue > 0.01


def test_sample_sphere_mean_trials_within_bound(tmp_path):
    out = tmp_path / "t.txt"
    assert run("sample-sphere", "--d", 6, "--k", 4, "--sigma", 0.7, "--steps", 4000, "--seed", 2,
               "--out", out) == 0
    s = summary(out)
    assert s["mean_trials_per_draw"] <= (1 + 3 * s["trials_stderr"]) / s["acceptance_lower_bound"]


def test_sample_sphere_same_seed_identical(tmp_path):
    outs = []
    for name in ("a.txt", "b.txt"):
        out = tmp_path / name
        assert run("sample-sphere", "--d", 3, "--k", 2, "--sigma", 0.8, "--steps", 300, "--seed", 9,
                   "--out", out) == 0
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert summary(outs[0]) == summary(outs[1])
    assert (tmp_path / "a.txt.meta.json").exists()


def test_sample_sphere_json_format(tmp_path):
    out = tmp_path / "s.json"
    assert run("sample-sphere", "--d", 3, "--k", 2, "--sigma", 1, "--steps", 10, "--seed", 0,
               "--format", "json", "--out", out) == 0
    data = json.loads(out.read_text())
    assert len(data["states"]) == 11 and len(data["states"][0]) == 2
    assert data["summary"]["k"] == 2


def test_sample_sphere_full_precision_round_trip(tmp_path):
    out = tmp_path / "p.txt"
    run("sample-sphere", "--d", 3, "--k", 1, "--sigma", 1, "--steps", 5, "--seed", 0, "--out", out)
    first = out.read_text().split()[0]
    coords = [float(v) for v in first.split(",")]
    assert ",".join(format(v, ".17g") for v in coords) == first


def test_budget_exhaustion_exit_code(tmp_path, capsys):
    code = run("sample-sphere", "--d", 3, "--k", 3, "--sigma", 60, "--steps", 10, "--max-trials", 20,
               "--out", tmp_path / "x.txt")
    assert code == 2
    assert "budget" in capsys.readouterr().err


def test_bad_configuration_exit_code(tmp_path):
    assert run("sample-sphere", "--d", 1, "--k", 1, "--sigma", 1, "--out", tmp_path / "x") == 2


def test_sample_discrete(tmp_path, psd):
    kfile = tmp_path / "k.txt"
    save_kernel_matrix(kfile, psd(5, 0))
    out = tmp_path / "d.txt"
    assert run("sample-discrete", "--kernel", kfile, "--k", 2, "--steps", 200, "--seed", 4, "--out", out) == 0
    states = read_trajectory(out, discrete=True)
    dpp = enumerate_pmf(psd(5, 0), 2)
    assert len(states) == 201 and all(dpp.prob(s) > 0 for s in states)


def test_sample_discrete_bad_k(tmp_path):
    kfile = tmp_path / "k.txt"
    save_kernel_matrix(kfile, np.eye(3))
    assert run("sample-discrete", "--kernel", kfile, "--k", 5, "--out", tmp_path / "o") == 2


def test_eigens_csv(tmp_path):
    out = tmp_path / "e.csv"
    assert run("eigens", "--d", 5, "--sigma", 1.0, "--ell-max", 40, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "ell,multiplicity,mu,cum_trace"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 41
    assert abs(float(rows[-1][3]) - 1.0) < 1e-8
    mus = eigen_ladder(5, 1.0, ell_max=40).mus
    np.testing.assert_array_equal([float(r[2]) for r in rows], mus)


@pytest.mark.parametrize("suite", ["discrete-stationarity", "conductance", "cheeger", "warmstart-bound"])
def test_verify_suites_pass(tmp_path, suite):
    out = tmp_path / "r.json"
    assert run("verify", "--suite", suite, "--instances", 6, "--n-max", 6, "--k-max", 3, "--seed", 1,
               "--out", out) == 0
    report = json.loads(out.read_text())
    assert report["passed"] and len(report["checks"]) == 6


def test_verify_eigens_trace(tmp_path):
    out = tmp_path / "r.json"
    assert run("verify", "--suite", "eigens-trace", "--out", out) == 0
    assert len(json.loads(out.read_text())["checks"]) == 9


def test_verify_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("verify", "--suite", "conductance", "--instances", 6, "--seed", 2, "--out", a)
    run("verify", "--suite", "conductance", "--instances", 6, "--seed", 2, "--jobs", 2, "--out", b)
    assert a.read_text() == b.read_text()


def test_analyze(tmp_path, psd):
    kfile = tmp_path / "k.txt"
    save_kernel_matrix(kfile, psd(5, 3))
    out, csv = tmp_path / "a.json", tmp_path / "c.csv"
    assert run("analyze", "--kernel", kfile, "--k", 2, "--out", out, "--steps", 20, "--csv", csv) == 0
    rep = json.loads(out.read_text())
    assert rep["phi"] > 0 and len(rep["stationary"]) == 10
    assert len(csv.read_text().splitlines()) == 22


def test_analyze_capacity_error(tmp_path):
    kfile = tmp_path / "k.txt"
    save_kernel_matrix(kfile, np.eye(25))
    assert run("analyze", "--kernel", kfile, "--k", 2, "--out", tmp_path / "a.json") == 2


def test_console_script_installed(tmp_path):
    exe = shutil.which("kdpp-gibbs")
    if exe is None:
        pytest.skip("console script not on PATH")
    cmd = [exe, "eigens", "--d", "3", "--sigma", "1", "--out", str(tmp_path / "e.csv")]
    res = subprocess.run(cmd, capture_output=True, text=True)
    assert res.returncode == 0 and "trace=" in res.stdout
