"""Command-line front end: run, compare, oracle, validate, spectra.

Exit codes: 0 success/certified, 2 validation or configuration failure,
3 completed run that fails optimality certification at the chosen tolerance.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import analysis, config
from .dynamics import simulate
from .errors import AllocError, ConfigError, NotConverging
from .graph import Digraph, spectral_data
from .model import SMOOTH, min_gains_nonsmooth, min_gains_smooth, validate
from .oracle import equilibrium_state, perturbation_margin, solve, solve_separable_bisection


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _apply_overrides(data: dict, pairs) -> dict:
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set needs key=value, got '{pair}'")
        path, raw = pair.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise ConfigError(f"--set path '{path}' does not exist in the scenario")
            node = node[k]
        node[keys[-1]] = config.parse_toml_value(raw.strip())
    return data


def _load_scenario(ref: str, overrides):
    data = _apply_overrides(config.resolve_scenario(ref), overrides)
    return config.build_scenario(config.loads(config.dumps(data)))


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _segment_equilibria(scenario, tol):
    """Oracle equilibrium for each demand configuration along the run.

    Returns a list of (start_time, problem_with_that_demand, equilibrium).
    """
    from dataclasses import replace

    problem = scenario.problem
    segments = []
    d = problem.d.copy()
    start = 0.0
    events = sorted(scenario.events, key=lambda e: e.time)
    for ev in events + [None]:
        seg_problem = replace(problem, d=d.copy())
        segments.append((start, seg_problem, equilibrium_state(seg_problem, solve(seg_problem, tol=tol))))
        if ev is None:
            break
        d[ev.agent] = ev.d
        start = ev.time
    return segments


def _active_segment(segments, t):
    current = segments[0]
    for seg in segments:
        if seg[0] <= t + 1e-12:
            current = seg
    return current


def _traj_csv(traj) -> str:
    dim = traj.x.shape[2]
    cols = (
        ["t", "agent"]
        + [f"x_{k + 1}" for k in range(dim)]
        + [f"mu_{k + 1}" for k in range(dim)]
        + [f"eta_{k + 1}" for k in range(dim)]
    )
    lines = [",".join(cols)]
    for s in range(traj.sample_count):
        for i in range(traj.x.shape[1]):
            row = [_fmt(traj.times[s]), str(i + 1)]
            row += [_fmt(v) for v in traj.x[s, i]]
            row += [_fmt(v) for v in traj.mu[s, i]]
            row += [_fmt(v) for v in traj.eta[s, i]]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _series_csv(traj, segments) -> str:
    problem = traj.scenario.problem
    spec = problem.spectral()
    gains = traj.scenario.gains
    smooth = traj.scenario.algorithm == SMOOTH
    dim = traj.x.shape[2]
    cols = (
        ["t"] + [f"mismatch_{k + 1}" for k in range(dim)]
        + ["consensus_error", "cost", "kkt_residual", "lyapunov"]
    )
    lines = [",".join(cols)]
    for s in range(traj.sample_count):
        t = float(traj.times[s])
        start, seg_problem, equilibrium = _active_segment(segments, t)
        report = analysis.kkt_check(seg_problem, traj.x[s], traj.mu[s], tol=np.inf)
        state = traj.state(s)
        if smooth:
            lyap = analysis.lyapunov_v2(state, equilibrium, spec, gains, problem.omega)
        else:
            lyap = analysis.lyapunov_v1(state, equilibrium, spec, gains)
        row = [_fmt(t)]
        row += [_fmt(v) for v in traj.mismatch[s]]
        row += [
            _fmt(traj.consensus_error[s]),
            _fmt(traj.cost[s]),
            _fmt(report.stationarity_residual.max()),
            _fmt(lyap),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _gain_bound_lines(scenario) -> list[str]:
    problem = scenario.problem
    spec = problem.spectral()
    if scenario.algorithm == SMOOTH:
        k1_min, k2_min, note = min_gains_smooth(spec, problem.omega, problem.theta)
    else:
        k1_min, k2_min, note = min_gains_nonsmooth(spec, problem.omega)
    return [
        f"lambda2_hat: {spec.lambda2_hat:.12g}",
        f"laplacian_norm: {spec.laplacian_norm:.12g}",
        f"k1_bound: {k1_min:.12g} (chosen {scenario.gains.k1:g})",
        f"k2_bound: {k2_min(scenario.gains.k1):.12g} (chosen {scenario.gains.k2:g})",
        f"k3_note: {note} (chosen {scenario.gains.k3:g})",
    ]


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    violations = validate(scenario)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        return 2
    started = time.perf_counter()
    traj = simulate(scenario, engine=args.engine)
    elapsed = time.perf_counter() - started

    segments = _segment_equilibria(scenario, tol=min(args.tol * 1e-3, 1e-8))
    final_problem = segments[-1][1]
    report = analysis.kkt_check(final_problem, traj.x[-1], traj.mu[-1], tol=args.tol)

    lines = [
        f"scenario: {args.scenario}",
        f"algorithm: {scenario.algorithm}",
        f"engine: {traj.engine}",
        f"steps: {int(round(scenario.horizon / scenario.h))}",
        f"samples: {traj.sample_count}",
        f"wall_seconds: {elapsed:.3f}",
    ]
    lines += _gain_bound_lines(scenario)
    lines += report.summary_lines()
    try:
        rate = analysis.estimate_rate(traj, segments[-1][2])
        lines.append(f"rate_slope: {rate.slope:.6g}")
        lines.append(f"rate_r_squared: {rate.r_squared:.6g}")
        if rate.theory_rate is not None:
            lines.append(f"rate_theory: {rate.theory_rate:.6g}")
    except NotConverging as exc:
        lines.append(f"rate: not estimated ({exc})")

    os.makedirs(args.out, exist_ok=True)
    _write_atomic(os.path.join(args.out, "traj.csv"), _traj_csv(traj))
    _write_atomic(os.path.join(args.out, "series.csv"), _series_csv(traj, segments))
    _write_atomic(os.path.join(args.out, "summary.txt"), "\n".join(lines) + "\n")
    for ln in lines:
        print(ln)
    if not report.certified:
        print(f"not certified at tolerance {args.tol:g}", file=sys.stderr)
        return 3
    return 0


def cmd_compare(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    violations = validate(scenario)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        return 2
    traj = simulate(scenario, engine=args.engine)
    segments = _segment_equilibria(scenario, tol=1e-10)
    _, final_problem, equilibrium = segments[-1]
    dev = np.sqrt(((traj.x[-1] - equilibrium.x) ** 2).sum(axis=1))
    print("per-agent |x_final - x_star|:")
    for i, v in enumerate(dev):
        print(f"  agent {i + 1}: {v:.6e}")
    print(f"max_deviation: {dev.max():.6e}")
    print(f"mismatch_norm: {np.linalg.norm(traj.mismatch[-1]):.6e}")
    print(f"consensus_error: {traj.consensus_error[-1]:.6e}")
    try:
        rate = analysis.estimate_rate(traj, equilibrium)
        print(f"rate_slope: {rate.slope:.6g} (r^2 {rate.r_squared:.4f})")
        if rate.theory_rate is not None:
            print(f"rate_theory: {rate.theory_rate:.6g}")
    except NotConverging as exc:
        print(f"rate: not estimated ({exc})")
    if args.seed is not None:
        rng = np.random.default_rng(args.seed)
        margin = perturbation_margin(final_problem, equilibrium.x, rng)
        print(f"perturbation_margin: {margin:.3e} (>= -1e-9 expected)")
    return 0


def cmd_oracle(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    problem = scenario.problem
    sol = solve(problem, tol=min(args.tol * 1e-2, 1e-8))
    print(f"iterations: {sol.iterations}")
    print(f"dual_gap_estimate: {sol.dual_gap_estimate:.3e}")
    print(f"mu_star: {' '.join(_fmt(v) for v in sol.mu_star)}")
    for i in range(problem.agent_count):
        print(f"x_star agent {i + 1}: {' '.join(_fmt(v) for v in sol.x_star[i])}")
    mu = np.tile(sol.mu_star, (problem.agent_count, 1))
    report = analysis.kkt_check(problem, sol.x_star, mu, tol=args.tol)
    for ln in report.summary_lines():
        print(ln)
    try:
        other = solve_separable_bisection(problem, tol=min(args.tol * 1e-2, 1e-8))
        gap = float(np.abs(other.x_star - sol.x_star).max())
        print(f"bisection_agreement: {gap:.3e}")
    except AllocError as exc:
        print(f"bisection_agreement: skipped ({exc})")
    if args.seed is not None:
        rng = np.random.default_rng(args.seed)
        margin = perturbation_margin(problem, sol.x_star, rng)
        print(f"perturbation_margin: {margin:.3e} (>= -1e-9 expected)")
    return 0 if report.certified else 3


def cmd_validate(args) -> int:
    scenario = _load_scenario(args.scenario, args.set)
    violations = validate(scenario)
    if violations:
        for v in violations:
            print(f"validation: {v}")
        return 2
    print("ok")
    return 0


def cmd_spectra(args) -> int:
    data = config.resolve_scenario(args.scenario)
    gtab = data.get("graph", {})
    nodes = int(gtab["nodes"])
    triples = [(int(u) - 1, int(v) - 1, float(w)) for u, v, w in gtab["edges"]]
    spec = spectral_data(Digraph.from_edges(nodes, triples))
    print(f"nodes: {nodes}")
    print(f"lambda2_hat: {spec.lambda2_hat:.12g}")
    print(f"laplacian_norm: {spec.laplacian_norm:.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="allocnet",
        description="Distributed resource allocation dynamics: simulate, certify, compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, tol_default=1e-2):
        p.add_argument("scenario", help="scenario file path or bundled name (example1, example2)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario value, e.g. gains.k1=12")
        p.add_argument("--tol", type=float, default=tol_default,
                       help="certification tolerance (default %(default)g)")

    p_run = sub.add_parser("run", help="simulate a scenario and write traj/series/summary")
    add_common(p_run)
    p_run.add_argument("--out", default="out", help="output directory (default ./out)")
    p_run.add_argument("--engine", default="auto", choices=["auto", "python", "compiled"])
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="diff a simulation against the oracle optimum")
    add_common(p_cmp)
    p_cmp.add_argument("--engine", default="auto", choices=["auto", "python", "compiled"])
    p_cmp.add_argument("--seed", type=int, default=None,
                       help="also run the randomized perturbation optimality check")
    p_cmp.set_defaults(fn=cmd_compare)

    p_orc = sub.add_parser("oracle", help="solve the scenario's problem centrally")
    add_common(p_orc)
    p_orc.add_argument("--seed", type=int, default=None,
                       help="also run the randomized perturbation optimality check")
    p_orc.set_defaults(fn=cmd_oracle)

    p_val = sub.add_parser("validate", help="check a scenario against the assumptions")
    add_common(p_val)
    p_val.set_defaults(fn=cmd_validate)

    p_spec = sub.add_parser("spectra", help="print graph spectral quantities")
    p_spec.add_argument("scenario", help="scenario file with a [graph] table")
    p_spec.set_defaults(fn=cmd_spectra)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, AllocError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
