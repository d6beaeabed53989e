"""Monte-Carlo benchmark engine: state sampling, measurement generation,
solver execution, and RMSE / identification / timing reports.

Every run is a pure function of (case file, config, seed).  Per-trial
randomness comes from seed sequences keyed on (root seed, trial index,
purpose), so trial t is reproducible regardless of how many trials run.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict, replace as dc_replace

import numpy as np

from .measurements import (MeasurementPlan, NoiseSigmas, VoltageEnvelope,
                           default_plan, generate, normalize,
                           remove_measurements)
from .network import Network, load_case
from .robust import identify_outliers, outlier_budget, ragd_solve, rfgd_solve
from .solvers import (ConvergenceTrace, DivergenceError, SolverConfig,
                      UnobservableSystemError, agd_solve, dc_initialize,
                      distance, fgd_solve, flat_initialize, gn_refine,
                      gn_solve)

SOLVERS = ("fgd", "agd", "rfgd", "ragd", "gn")
REPORT_SCHEMA = 1


@dataclass(frozen=True)
class OutlierSpec:
    count: int = 0
    factor: float = 5.0


@dataclass(frozen=True)
class ExperimentConfig:
    case: str                                  # path to a case file
    solver: str = "fgd"
    profile: str = "paper_legacy"
    pmu_buses: tuple[int, ...] = ()            # external bus ids
    refine: bool = False
    trials: int = 100
    seed: int = 0
    sigmas: NoiseSigmas = NoiseSigmas()
    outliers: OutlierSpec = OutlierSpec()
    rho: float = 0.0
    init: str = "dc"                           # dc | flat
    envelope: VoltageEnvelope = VoltageEnvelope()
    solver_config: SolverConfig = SolverConfig(max_iters=10_000)
    identify_k: int | None = None              # None -> the rho budget
    rmse_converged: float = 0.05               # convergence-flag thresholds
    first_order_tol: float = 1e-8              # matches the Gauss-Newton stop

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; pick from {SOLVERS}")
        if self.init not in ("dc", "flat"):
            raise ValueError(f"unknown init {self.init!r}")

    def to_json(self) -> str:
        doc = asdict(self)
        return json.dumps(doc, indent=2)


@dataclass
class TrialResult:
    trial: int
    seed: int
    rmse: float
    iterations: int
    elapsed_ms: float
    converged: bool
    refine_ms: float = 0.0
    termination: str = ""
    failure: str | None = None
    outlier_true_indices: list[int] = field(default_factory=list)
    outlier_identified_indices: list[int] = field(default_factory=list)
    hit_count: int = 0


@dataclass
class BenchmarkReport:
    config: ExperimentConfig
    trials: list[TrialResult]
    mean_rmse: float
    convergence_rate_pct: float
    mean_runtime_ms: float
    identification_rate_pct: float | None
    last_trace: ConvergenceTrace | None = None

    def to_json(self) -> str:
        doc = {
            "schema": REPORT_SCHEMA,
            "config": json.loads(self.config.to_json()),
            "aggregates": {
                "mean_rmse": self.mean_rmse,
                "convergence_rate_pct": self.convergence_rate_pct,
                "mean_runtime_ms": self.mean_runtime_ms,
                "identification_rate_pct": self.identification_rate_pct,
            },
            "trials": [asdict(t) for t in self.trials],
        }
        return json.dumps(doc, indent=2)


def validate_report(report: BenchmarkReport) -> bool:
    """Aggregates must be recomputable from the per-trial rows."""
    agg = _aggregate(report.config, report.trials)
    return (np.isclose(agg.mean_rmse, report.mean_rmse, equal_nan=True) and
            np.isclose(agg.convergence_rate_pct, report.convergence_rate_pct) and
            np.isclose(agg.mean_runtime_ms, report.mean_runtime_ms) and
            (agg.identification_rate_pct is None) ==
            (report.identification_rate_pct is None) and
            (agg.identification_rate_pct is None or
             np.isclose(agg.identification_rate_pct,
                        report.identification_rate_pct)))


def sample_true_state(n: int, seed, slack_index: int = 0,
                      envelope: VoltageEnvelope = VoltageEnvelope(),
                      angle_span: float = 0.35 * np.pi) -> np.ndarray:
    """Random operating state: per-bus magnitude uniform in the envelope,
    angle uniform in [-angle_span, angle_span], slack angle pinned to 0."""
    rng = np.random.default_rng(seed)
    mag = rng.uniform(envelope.v_lo, envelope.v_hi, n)
    ang = rng.uniform(-angle_span, angle_span, n)
    ang[slack_index] = 0.0
    return mag * np.exp(1j * ang)


def _trial_seed(root: int, trial: int, purpose: int) -> list[int]:
    return [int(root), int(trial), int(purpose)]


def _inject_outliers(plan: MeasurementPlan, v_true: np.ndarray,
                     spec: OutlierSpec, seed) -> tuple[MeasurementPlan, list[int]]:
    """Overwrite `count` randomly chosen observations with factor * true
    value (applied before normalization)."""
    if spec.count == 0:
        return plan, []
    if spec.count >= len(plan):
        raise ValueError("outlier count must be smaller than the plan size")
    rng = np.random.default_rng(seed)
    picks = sorted(int(i) for i in
                   rng.choice(len(plan), size=spec.count, replace=False))
    clean = plan.quadratic_forms(v_true)
    measurements = list(plan.measurements)
    for i in picks:
        measurements[i] = dc_replace(measurements[i],
                                     z=float(spec.factor * clean[i]))
    return plan.with_measurements(measurements), picks


def _first_order_inf_norm(plan: MeasurementPlan, v: np.ndarray) -> float:
    hu = plan.h_times(v)
    resid = plan.z_vector() - np.einsum("n,ln->l", v.conj(), hu).real
    jac = np.concatenate([2.0 * hu.real, 2.0 * hu.imag], axis=1)
    return float(np.linalg.norm(jac.T @ resid, np.inf))


def _solve_one(config: ExperimentConfig, plan: MeasurementPlan, u0: np.ndarray,
               v_true: np.ndarray):
    sc = config.solver_config
    if config.solver == "fgd":
        state, trace = fgd_solve(plan, u0, sc, v_true=v_true)
        return state.u[:, 0], trace
    if config.solver == "agd":
        state, trace = agd_solve(plan, u0, sc, v_true=v_true)
        return state.u[:, 0], trace
    if config.solver == "rfgd":
        state, trace = rfgd_solve(plan, u0, sc, rho=config.rho, v_true=v_true)
        return state.u[:, 0], trace
    if config.solver == "ragd":
        state, trace = ragd_solve(plan, u0, sc, rho=config.rho, v_true=v_true)
        return state.u[:, 0], trace
    v, trace = gn_solve(plan, u0, sc, v_true=v_true)
    return v, trace


def load_network(config: ExperimentConfig) -> Network:
    return load_case(config.case)


def build_plan(config: ExperimentConfig, net: Network) -> MeasurementPlan:
    pmu_idx = [net.id_to_index[b] for b in config.pmu_buses]
    return default_plan(net, config.profile, pmu_buses=pmu_idx,
                        sigmas=config.sigmas)


def run_trial(config: ExperimentConfig, net: Network, base_plan: MeasurementPlan,
              trial: int) -> tuple[TrialResult, ConvergenceTrace | None]:
    root = config.seed
    v_true = sample_true_state(net.n_bus, _trial_seed(root, trial, 0),
                               slack_index=net.slack_index,
                               envelope=config.envelope)
    plan = generate(base_plan, v_true, _trial_seed(root, trial, 1))
    plan, true_out = _inject_outliers(plan, v_true, config.outliers,
                                      _trial_seed(root, trial, 2))
    plan = normalize(plan)
    u0 = dc_initialize(plan) if config.init == "dc" else flat_initialize(plan)

    result = TrialResult(trial=trial, seed=root, rmse=float("nan"),
                         iterations=0, elapsed_ms=0.0, converged=False,
                         outlier_true_indices=true_out)
    t0 = time.perf_counter()
    try:
        v_hat, trace = _solve_one(config, plan, u0, v_true)
    except (DivergenceError, UnobservableSystemError) as exc:
        result.failure = f"{type(exc).__name__}: {exc}"
        result.elapsed_ms = (time.perf_counter() - t0) * 1e3
        return result, getattr(exc, "trace", None)
    result.elapsed_ms = (time.perf_counter() - t0) * 1e3
    result.iterations = trace.iterations
    result.termination = trace.termination_reason

    ident_plan = plan
    if config.outliers.count or config.rho > 0.0:
        k = (config.identify_k if config.identify_k is not None
             else outlier_budget(config.rho, len(plan)))
        k = min(k, len(plan) - 1)
        if k > 0:
            result.outlier_identified_indices = identify_outliers(v_hat, plan, k)
            result.hit_count = len(set(result.outlier_identified_indices) &
                                   set(true_out))
            ident_plan = remove_measurements(plan,
                                             result.outlier_identified_indices)

    if config.refine:
        t1 = time.perf_counter()
        v_hat = gn_refine(ident_plan, v_hat)
        result.refine_ms = (time.perf_counter() - t1) * 1e3

    result.rmse = distance(v_hat, v_true) / float(np.linalg.norm(v_true))
    first_order = _first_order_inf_norm(ident_plan, v_hat)
    result.converged = bool(result.rmse <= config.rmse_converged and
                            first_order < config.first_order_tol)
    return result, trace


def _aggregate(config: ExperimentConfig, trials: list[TrialResult]) -> BenchmarkReport:
    ok = [t for t in trials if t.failure is None]
    mean_rmse = float(np.mean([t.rmse for t in ok])) if ok else float("nan")
    conv = 100.0 * sum(t.converged for t in trials) / len(trials)
    runtime = float(np.mean([t.elapsed_ms for t in trials]))
    ident = None
    if config.outliers.count:
        ident = 100.0 * float(np.mean(
            [t.hit_count / config.outliers.count for t in trials]))
    return BenchmarkReport(config=config, trials=trials, mean_rmse=mean_rmse,
                           convergence_rate_pct=conv, mean_runtime_ms=runtime,
                           identification_rate_pct=ident)


def run_experiment(config: ExperimentConfig,
                   keep_last_trace: bool = False) -> BenchmarkReport:
    """Full Monte-Carlo run; solver failures are recorded per trial and never
    abort the batch."""
    net = load_network(config)
    base_plan = build_plan(config, net)
    trials: list[TrialResult] = []
    last_trace = None
    for t in range(config.trials):
        result, trace = run_trial(config, net, base_plan, t)
        trials.append(result)
        last_trace = trace
    report = _aggregate(config, trials)
    if keep_last_trace:
        report = dc_replace(report, last_trace=last_trace)
    return report
