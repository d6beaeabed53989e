"""Command-line interface: gen / solve / bench / bounds.

Exit codes: 0 success, 1 configuration error (bad flags or values),
2 runtime failure (unreadable case, solver breakdown, ...).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import figures
from .analysis import analytic_bounds, empirical_smoothness, verify_sandwich
from .harness import ExperimentConfig, OutlierSpec, run_experiment, \
    sample_true_state
from .measurements import (NoiseSigmas, VoltageEnvelope, default_plan,
                           generate, normalize, plan_from_json, plan_to_json)
from .network import CaseError, load_case
from .solvers import (SolverConfig, dc_initialize, distance, flat_initialize,
                      gn_refine)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help="case file (.m or .json)")
    p.add_argument("--profile", default="paper_legacy",
                   choices=["paper_legacy", "full"])
    p.add_argument("--pmu", default="", metavar="ID,ID,...",
                   help="comma-separated external bus ids carrying PMUs")
    p.add_argument("--sigma-flow", type=float, default=0.02)
    p.add_argument("--sigma-injection", type=float, default=0.04)
    p.add_argument("--sigma-voltage", type=float, default=0.004)
    p.add_argument("--sigma-pmu", type=float, default=0.0004)
    p.add_argument("--seed", type=int, default=0)


def _add_solver_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", default="fgd",
                   help="fgd | agd | rfgd | ragd | gn")
    p.add_argument("--init", default="dc", choices=["dc", "flat"])
    p.add_argument("--rho", type=float, default=0.0,
                   help="outlier fraction for the robust solvers")
    p.add_argument("--refine", action="store_true",
                   help="polish with a few Gauss-Newton iterations")
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--step-scale", type=float, default=1.0 / 16.0,
                   help="leading constant of the auto step rule")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--tol-iterate", type=float, default=1e-7)
    p.add_argument("--tol-objective", type=float, default=1e-9)
    p.add_argument("--momentum", type=float, default=None,
                   help="constant momentum; omit for the (k-2)/(k+1) schedule")


def _add_output_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", default=None, metavar="DIR",
                   help="directory for report/trace/figure artifacts")
    p.add_argument("--format", default="json", choices=["json", "csv"],
                   help="report table format")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")


def _sigmas(args) -> NoiseSigmas:
    return NoiseSigmas(flow=args.sigma_flow, injection=args.sigma_injection,
                       voltage=args.sigma_voltage, pmu=args.sigma_pmu)


def _pmu_ids(args) -> tuple[int, ...]:
    if not args.pmu:
        return ()
    return tuple(int(tok) for tok in args.pmu.split(",") if tok.strip())


def _solver_config(args) -> SolverConfig:
    return SolverConfig(step_size=args.step_size, step_scale=args.step_scale,
                        max_iters=args.max_iters, tol_iterate=args.tol_iterate,
                        tol_objective=args.tol_objective,
                        momentum=args.momentum, seed=args.seed)


def _experiment_config(args, trials: int) -> ExperimentConfig:
    return ExperimentConfig(
        case=args.case, solver=args.solver, profile=args.profile,
        pmu_buses=_pmu_ids(args), refine=args.refine, trials=trials,
        seed=args.seed, sigmas=_sigmas(args),
        outliers=OutlierSpec(count=getattr(args, "outliers", 0),
                             factor=getattr(args, "outlier_factor", 5.0)),
        rho=args.rho, init=args.init, solver_config=_solver_config(args))


def _outdir(args) -> str | None:
    if args.output is None:
        return None
    os.makedirs(args.output, exist_ok=True)
    return args.output


def _report_csv(report) -> str:
    lines = ["trial,seed,rmse,iterations,elapsed_ms,converged,refine_ms,"
             "termination,hit_count"]
    for t in report.trials:
        lines.append(f"{t.trial},{t.seed},{t.rmse!r},{t.iterations},"
                     f"{t.elapsed_ms},{int(t.converged)},{t.refine_ms},"
                     f"{t.termination},{t.hit_count}")
    return "\n".join(lines) + "\n"


def _plan_from_args(args, net):
    pmu_idx = [net.id_to_index[b] for b in _pmu_ids(args)]
    return default_plan(net, args.profile, pmu_buses=pmu_idx,
                        sigmas=_sigmas(args))


def _cmd_gen(args) -> int:
    net = load_case(args.case)
    plan = _plan_from_args(args, net)
    v_true = sample_true_state(net.n_bus, [args.seed, 0, 0],
                               slack_index=net.slack_index)
    plan = generate(plan, v_true, [args.seed, 0, 1])
    text = plan_to_json(plan)
    if args.output:
        os.makedirs(os.path.dirname(args.output) or ".", exist_ok=True)
        with open(args.output, "w") as fh:
            fh.write(text)
        print(f"wrote {len(plan)} measurements to {args.output}")
    else:
        print(text)
    return 0


def _cmd_solve(args) -> int:
    net = load_case(args.case)
    if args.plan:
        with open(args.plan) as fh:
            plan = plan_from_json(net, fh.read())
        v_true = None
    else:
        plan = _plan_from_args(args, net)
        v_true = sample_true_state(net.n_bus, [args.seed, 0, 0],
                                   slack_index=net.slack_index)
        plan = generate(plan, v_true, [args.seed, 0, 1])
    plan = normalize(plan)
    u0 = dc_initialize(plan) if args.init == "dc" else flat_initialize(plan)

    config = _experiment_config(args, trials=1)
    from .harness import _solve_one
    v_hat, trace = _solve_one(config, plan, u0, v_true)
    if args.refine:
        v_hat = gn_refine(plan, v_hat)

    print(f"solver:      {args.solver}")
    print(f"iterations:  {trace.iterations} ({trace.termination_reason})")
    print(f"objective:   {trace.objective[-1]:.6e}")
    if v_true is not None:
        rmse = distance(v_hat, v_true) / float(np.linalg.norm(v_true))
        print(f"rmse:        {rmse:.6e}")
    out = _outdir(args)
    if out:
        trace_path = os.path.join(out, "trace.csv")
        trace.write_csv(trace_path)
        state_path = os.path.join(out, "state.json")
        with open(state_path, "w") as fh:
            json.dump({"v_re": list(v_hat.real), "v_im": list(v_hat.imag)}, fh)
        print(f"trace:       {trace_path}")
        if not args.no_figures:
            print("figure:      " + figures.save_trace_figure(
                trace, os.path.join(out, "trace.png"),
                title=f"{args.solver} on {os.path.basename(args.case)}"))
    return 0


def _cmd_bench(args) -> int:
    config = _experiment_config(args, trials=args.trials)
    report = run_experiment(config, keep_last_trace=True)
    print(f"{'trial':>5} {'rmse':>12} {'iters':>7} {'ms':>9} {'conv':>4}")
    for t in report.trials:
        print(f"{t.trial:>5} {t.rmse:>12.4e} {t.iterations:>7} "
              f"{t.elapsed_ms:>9.1f} {'yes' if t.converged else 'no':>4}")
    print(f"mean rmse:            {report.mean_rmse:.6e}")
    print(f"convergence rate:     {report.convergence_rate_pct:.1f}%")
    print(f"mean runtime:         {report.mean_runtime_ms:.1f} ms")
    if report.identification_rate_pct is not None:
        print(f"identification rate:  {report.identification_rate_pct:.1f}%")
    out = _outdir(args)
    if out:
        if args.format == "json":
            path = os.path.join(out, "report.json")
            with open(path, "w") as fh:
                fh.write(report.to_json())
        else:
            path = os.path.join(out, "report.csv")
            with open(path, "w") as fh:
                fh.write(_report_csv(report))
        print(f"report:               {path}")
        if not args.no_figures:
            print("figure:               " + figures.save_report_figure(
                report, os.path.join(out, "report.png")))
            if report.last_trace is not None:
                figures.save_trace_figure(
                    report.last_trace, os.path.join(out, "last_trace.png"),
                    title=f"{config.solver}, last trial")
    return 0


def _cmd_bounds(args) -> int:
    net = load_case(args.case)
    plan = _plan_from_args(args, net)
    v_lo, v_hi = (float(tok) for tok in args.envelope.split(","))
    env = VoltageEnvelope(v_lo, v_hi)
    if args.normalized:
        v_probe = sample_true_state(net.n_bus, [args.seed, 0, 0],
                                    slack_index=net.slack_index, envelope=env)
        plan = normalize(generate(plan, v_probe, [args.seed, 0, 1]))
    bounds = analytic_bounds(plan, env)
    sandwich = verify_sandwich(plan, env, samples=args.samples, seed=args.seed)
    u0 = flat_initialize(plan) if args.normalized else \
        np.ones(net.n_bus, dtype=complex)
    m_emp = empirical_smoothness(plan, u0, trials=50, seed=args.seed,
                                 envelope=env)
    print(f"m:                 {bounds.m:.6g}"
          + ("  (vacuous: no voltage meters)" if bounds.lower_vacuous else ""))
    print(f"M (analytic):      {bounds.m_bound:.6g}")
    print(f"M (empirical):     {m_emp:.6g}")
    print(f"condition number:  {bounds.kappa:.6g}")
    print(f"sandwich check:    {'pass' if sandwich.passed else 'FAIL'} "
          f"({sandwich.samples} samples, tightest lower x{sandwich.worst_lower_ratio:.3g}, "
          f"upper x{sandwich.worst_upper_ratio:.3g})")
    out = _outdir(args)
    if out:
        path = os.path.join(out, "bounds.json")
        doc = json.loads(bounds.to_json())
        doc["M_empirical"] = m_emp
        doc["sandwich"] = json.loads(sandwich.to_json())
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
        print(f"report:            {path}")
        if not args.no_figures:
            print("figure:            " + figures.save_sandwich_figure(
                plan, bounds, os.path.join(out, "sandwich.png"),
                seed=args.seed))
    return 0 if sandwich.passed else 2


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridse",
                     description="State estimation for transmission grids via "
                                 "factored gradient descent")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[], help="generate a measurement-set JSON")
    _add_common(p)
    p.add_argument("--output", default=None, metavar="FILE")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("solve", help="run one estimation")
    _add_common(p)
    _add_solver_opts(p)
    _add_output_opts(p)
    p.add_argument("--plan", default=None, metavar="FILE",
                   help="measurement-set JSON (otherwise generated from --seed)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("bench", help="Monte-Carlo benchmark")
    _add_common(p)
    _add_solver_opts(p)
    _add_output_opts(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--outliers", type=int, default=0,
                   help="corrupted meters per trial")
    p.add_argument("--outlier-factor", type=float, default=5.0)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("bounds", help="envelope bounds and sandwich check")
    _add_common(p)
    _add_output_opts(p)
    p.add_argument("--envelope", default="0.95,1.05", metavar="LO,HI")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--normalized", action="store_true",
                   help="apply measurement normalization before the bounds")
    p.set_defaults(func=_cmd_bounds)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if not os.path.exists(args.case):
            print(f"gridse: error: case file not found: {args.case}",
                  file=sys.stderr)
            return 1
        return args.func(args)
    except (ValueError, CaseError) as exc:
        print(f"gridse: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:                      # noqa: BLE001
        print(f"gridse: runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
