"""Command-line experiment runner.

Exit codes: 0 all checks pass, 1 verification failure, 2 configuration or
capacity error.  Every stochastic output is a function of the flags and
``--seed``; wall-clock data goes to a separate ``<out>.meta.json``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze_chain
from .chain import GibbsChain
from .conditional import exact_oracle, rejection_oracle
from .discrete import load_kernel_matrix
from .errors import (
    AssumptionViolatedError,
    KdppError,
    OracleBudgetError,
    VerificationError,
)
from .formats import derive_rng, format_point, format_state
from .kernel import matrix_kernel
from .sphere import acceptance_lower_bound, eigen_ladder, sphere_gaussian_kernel, threshold_t
from .suites import SUITES, run_suite
from .warmstart import greedy_start

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def step_budget(k: int, eps: float) -> int:
    """ceil(k^5 log(k / eps)), the warm-start mixing budget with constant 1."""
    return max(0, math.ceil(k**5 * math.log(k / eps)))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_meta(out: Path, started: float, **extra) -> None:
    meta = {
        "wall_time_s": time.perf_counter() - started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        **extra,
    }
    _write_json(out.with_name(out.name + ".meta.json"), meta)


def _sample(chain: GibbsChain, start, steps: int, burnin: int, thin: int) -> list:
    state = start
    for _ in range(burnin):
        state = chain.step(state)
    return chain.run(state, steps, thin=thin)


def cmd_sample_sphere(args) -> int:
    started = time.perf_counter()
    if args.d < 2 or args.k < 1 or not args.sigma > 0:
        raise ValueError("need d >= 2, k >= 1, sigma > 0")
    kernel = sphere_gaussian_kernel(args.d, args.sigma)
    oracle = rejection_oracle(kernel, args.max_trials)
    warm = greedy_start(kernel, args.k, oracle, derive_rng(args.seed, "warm-start"))
    chain = GibbsChain(kernel, args.k, oracle, lazy=not args.non_lazy, rng=derive_rng(args.seed, "gibbs"))
    states = _sample(chain, warm.state, args.steps, args.burnin, args.thin)

    try:
        t = threshold_t(args.d, args.k)
        bound = acceptance_lower_bound(args.d, args.k, args.sigma)
    except AssumptionViolatedError:
        t, bound = None, None
    draws = args.k + chain.oracle_calls
    total = warm.total_trials + chain.total_trials
    total_sq = sum(t * t for t in warm.per_step_trials) + chain.total_trials_sq
    mean = total / draws
    var = (total_sq - draws * mean * mean) / (draws - 1) if draws > 1 else math.nan
    stderr = math.sqrt(max(var, 0.0) / draws) if draws > 1 else None
    summary = {
        "d": args.d,
        "k": args.k,
        "sigma": args.sigma,
        "seed": args.seed,
        "steps": args.steps,
        "burnin": args.burnin,
        "thin": args.thin,
        "lazy": not args.non_lazy,
        "recorded_states": len(states),
        "warm_start_trials": warm.per_step_trials,
        "oracle_calls": draws,
        "total_trials": total,
        "mean_trials_per_draw": mean,
        "trials_stderr": stderr,
        "threshold_t": t,
        "acceptance_lower_bound": bound,
        "expected_trials_upper_bound": None if not bound else 1.0 / bound,
        "step_budget_constant_1": step_budget(args.k, args.eps),
        "eps": args.eps,
    }
    out = Path(args.out)
    points = [[np.asarray(p).tolist() for p in s.points] for s in states]
    if args.format == "json":
        _write_json(out, {"summary": summary, "states": points})
    else:
        with open(out, "w") as fh:
            for s in states:
                fh.write(format_state(s.points) + "\n")
        _write_json(out.with_name(out.name + ".summary.json"), summary)
    _write_meta(out, started)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_sample_discrete(args) -> int:
    started = time.perf_counter()
    kernel = matrix_kernel(load_kernel_matrix(args.kernel))
    n = kernel.domain.n
    if not 1 <= args.k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    oracle = exact_oracle(kernel)
    warm = greedy_start(kernel, args.k, oracle, derive_rng(args.seed, "warm-start"))
    chain = GibbsChain(kernel, args.k, oracle, lazy=not args.non_lazy, rng=derive_rng(args.seed, "gibbs"))
    states = _sample(chain, warm.state, args.steps, args.burnin, args.thin)
    out = Path(args.out)
    with open(out, "w") as fh:
        for s in states:
            fh.write(format_state(s.key()) + "\n")
    summary = {
        "n": n,
        "k": args.k,
        "seed": args.seed,
        "steps": args.steps,
        "burnin": args.burnin,
        "thin": args.thin,
        "lazy": not args.non_lazy,
        "recorded_states": len(states),
        "step_budget_constant_1": step_budget(args.k, args.eps),
    }
    _write_json(out.with_name(out.name + ".summary.json"), summary)
    _write_meta(out, started)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eigens(args) -> int:
    ladder = eigen_ladder(args.d, args.sigma, args.ell_max)
    cum = ladder.cumulative_trace()
    lines = ["ell,multiplicity,mu,cum_trace"]
    for (ell, mu, n), c in zip(ladder.entries, cum):
        lines.append(f"{ell},{n},{format_point(mu)},{format_point(c)}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"trace={ladder.trace!r} tail_mass={ladder.tail_mass!r}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suite(
        args.suite,
        args.seed,
        count=args.instances,
        n_max=args.n_max,
        k_max=args.k_max,
        d_list=tuple(args.d_list),
        sigma_list=tuple(args.sigma_list),
        jobs=args.jobs,
    )
    _write_json(Path(args.out), report)
    failed = [c["name"] for c in report["checks"] if not c["passed"]]
    status = "PASS" if report["passed"] else "FAIL"
    print(f"{status} {args.suite}: {len(report['checks']) - len(failed)}/{len(report['checks'])} checks")
    for name in failed:
        bad = next(c for c in report["checks"] if c["name"] == name)
        print(f"  failed {name}: {json.dumps(bad, default=str)}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_analyze(args) -> int:
    matrix = load_kernel_matrix(args.kernel)
    report = analyze_chain(matrix, args.k, steps=args.steps, lazy=not args.non_lazy)
    Path(args.out).write_text(report.to_json() + "\n")
    if args.csv:
        Path(args.csv).write_text(report.curves_csv())
    print(
        f"phi={report.conductance!r} lambda={report.poincare!r} "
        f"spectral_gap={report.spectral_gap!r} states={len(report.states)}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kdpp-gibbs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def chain_flags(sp):
        sp.add_argument("--k", type=int, required=True)
        sp.add_argument("--steps", type=int, default=1000)
        sp.add_argument("--burnin", type=int, default=0)
        sp.add_argument("--thin", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True)
        sp.add_argument("--eps", type=float, default=0.05, help="target TV for the reported step budget")
        sp.add_argument("--non-lazy", action="store_true", help="disable the 1/2 holding probability")

    s = sub.add_parser("sample-sphere", help="Gibbs sampling of the Gaussian k-DPP on S^{d-1}")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--format", choices=("lines", "json"), default="lines")
    s.add_argument("--max-trials", type=int, default=10**6)
    chain_flags(s)
    s.set_defaults(func=cmd_sample_sphere)

    s = sub.add_parser("sample-discrete", help="Gibbs sampling of a discrete k-DPP")
    s.add_argument("--kernel", required=True)
    chain_flags(s)
    s.set_defaults(func=cmd_sample_discrete)

    s = sub.add_parser("eigens", help="Mercer eigenvalue ladder as CSV")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--ell-max", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eigens)

    s = sub.add_parser("verify", help="run a verification suite")
    s.add_argument("--suite", choices=SUITES, required=True)
    s.add_argument("--instances", type=int, default=50)
    s.add_argument("--n-max", type=int, default=8)
    s.add_argument("--k-max", type=int, default=3)
    s.add_argument("--d-list", type=int, nargs="+", default=[3, 5, 10])
    s.add_argument("--sigma-list", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    s.add_argument("--jobs", type=int, default=1, help="worker processes across instances")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("analyze", help="exact chain report for a small discrete instance")
    s.add_argument("--kernel", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--csv", default=None, help="also write the decay curves as CSV")
    s.add_argument("--non-lazy", action="store_true")
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        if exc.counterexample is not None:
            print(json.dumps(exc.counterexample, default=str), file=sys.stderr)
        return EXIT_FAIL
    except OracleBudgetError as exc:
        print(f"oracle budget exhausted: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KdppError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
