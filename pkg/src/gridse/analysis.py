"""Restricted strong-convexity / smoothness constants of the quadratic
measurement operator over the voltage envelope, and their empirical checks.

For rank-one V = v v^H with per-bus magnitudes inside [V_lo, V_hi], each
squared meter output is bounded by network quantities:

* voltage meters:      V_lo^4 <= |V_n|^4 <= V_hi^4
* branch-flow pairs:   P^2 + Q^2 <= (|Yff| + |Yft|)^2 V_hi^4
                       (4 |y|^2 V_hi^4 for a plain line) with lower bound 0
* injection pairs:     P^2 + Q^2 <= (sum_k |Y_nk|)^2 V_hi^4, lower bound 0

Summing and dividing by the envelope extremes of ||V||_F^2 = ||v||^4 in
[N^2 V_lo^4, N^2 V_hi^4] yields the reported constants

    m = (sum of voltage lower terms) / (N^2 V_hi^4)
    M = (sum of all upper terms)     / (N^2 V_lo^4)

so that m ||V||_F^2 <= ||H(V)||_2^2 <= M ||V||_F^2 on the envelope.  Each
term carries the measurement's stored normalization scale squared, so the
bounds apply to the plan exactly as solved.  The injection bound uses the
full admittance-row magnitude sum (diagonal included), which is what the
row-based quadratic form actually requires.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .measurements import (MeasurementPlan, MeasurementType, VoltageEnvelope)
from .network import branch_stamps
from .solvers import _coeff_matrix, _factored_fro_dist


@dataclass(frozen=True)
class BoundsReport:
    m: float
    m_bound: float                 # analytic smoothness upper bound M
    envelope: VoltageEnvelope
    lower_vacuous: bool            # no voltage meters -> m = 0
    m_empirical: float | None = None

    @property
    def kappa(self) -> float:
        return float("inf") if self.m == 0.0 else self.m_bound / self.m

    def to_json(self) -> str:
        return json.dumps({
            "m": self.m, "M_bound": self.m_bound, "M_empirical": self.m_empirical,
            "kappa": None if self.m == 0.0 else self.kappa,
            "lower_vacuous": self.lower_vacuous,
            "envelope": [self.envelope.v_lo, self.envelope.v_hi],
        }, indent=2)


@dataclass(frozen=True)
class SandwichReport:
    passed: bool
    samples: int
    worst_lower_ratio: float       # min over samples of ||H(V)||^2 / (m ||V||_F^2)
    worst_upper_ratio: float       # max over samples of ||H(V)||^2 / (M ||V||_F^2)
    violation_state: np.ndarray | None = None

    def to_json(self) -> str:
        return json.dumps({
            "passed": self.passed, "samples": self.samples,
            "worst_lower_ratio": self.worst_lower_ratio,
            "worst_upper_ratio": self.worst_upper_ratio,
        }, indent=2)


def _pair_key(kind) -> tuple:
    if kind.mtype in (MeasurementType.P_INJ, MeasurementType.Q_INJ):
        return ("inj", kind.bus)
    return ("flow", kind.branch, kind.from_end)


def analytic_bounds(plan: MeasurementPlan,
                    envelope: VoltageEnvelope = VoltageEnvelope()) -> BoundsReport:
    """Closed-form envelope bounds on the measurement operator.

    P/Q meters on the same element are bounded jointly (their squared sum is
    one power magnitude); with differing normalization scales the pair takes
    the larger scale, which keeps the bound valid.
    """
    net = plan.network
    n = net.n_bus
    v_lo4 = envelope.v_lo ** 4
    v_hi4 = envelope.v_hi ** 4

    row_abs = np.asarray(np.abs(net.ybus).sum(axis=1)).ravel()

    lower_sum = 0.0
    upper_sum = 0.0
    has_voltage = False
    pair_scale: dict[tuple, float] = {}
    for meas in plan.measurements:
        kind = meas.kind
        if kind.mtype is MeasurementType.VMAG_SQ:
            has_voltage = True
            lower_sum += meas.scale ** 2 * v_lo4
            upper_sum += meas.scale ** 2 * v_hi4
            continue
        key = _pair_key(kind)
        pair_scale[key] = max(pair_scale.get(key, 0.0), meas.scale)
    for key, scale in pair_scale.items():
        if key[0] == "inj":
            coef = row_abs[key[1]] ** 2
        else:
            br = net.branches[key[1]]
            yff, yft, ytf, ytt = branch_stamps(br)
            if key[2]:
                coef = (abs(yff) + abs(yft)) ** 2
            else:
                coef = (abs(ytt) + abs(ytf)) ** 2
        upper_sum += scale ** 2 * coef * v_hi4

    m = lower_sum / (n ** 2 * v_hi4)
    m_bound = upper_sum / (n ** 2 * v_lo4)
    return BoundsReport(m=m, m_bound=m_bound, envelope=envelope,
                        lower_vacuous=not has_voltage)


def sample_envelope_state(n: int, envelope: VoltageEnvelope, rng,
                          angle_span: float = 0.35 * np.pi) -> np.ndarray:
    """One rank-one-generating state with uniform magnitudes in the envelope
    and uniform angles in [-angle_span, angle_span]."""
    mag = rng.uniform(envelope.v_lo, envelope.v_hi, n)
    ang = rng.uniform(-angle_span, angle_span, n)
    return mag * np.exp(1j * ang)


def empirical_smoothness(plan: MeasurementPlan, u0, trials: int = 50,
                         seed: int = 0,
                         envelope: VoltageEnvelope = VoltageEnvelope()) -> float:
    """Largest observed difference quotient
    ||grad f(V0) - grad f(V)||_F / ||V0 - V||_F over random envelope states.

    The observation vector cancels in the gradient difference, so the plan
    does not need populated z values.
    """
    u0 = np.asarray(u0, dtype=complex)
    if u0.ndim == 1:
        u0 = u0[:, None]
    rng = np.random.default_rng(seed)
    q0 = plan.quadratic_forms(u0)
    best = 0.0
    for _ in range(trials):
        v = sample_envelope_state(plan.n_bus, envelope, rng)[:, None]
        denom = _factored_fro_dist(u0, v)
        if denom == 0.0:
            continue
        diff = _coeff_matrix(plan, q0 - plan.quadratic_forms(v))
        best = max(best, float(np.linalg.norm(diff.data)) / denom)
    return best


def verify_sandwich(plan: MeasurementPlan,
                    envelope: VoltageEnvelope = VoltageEnvelope(),
                    samples: int = 1000, seed: int = 0,
                    rel_slack: float = 1e-9) -> SandwichReport:
    """Check m ||V||_F^2 <= ||H(V)||_2^2 <= M ||V||_F^2 on sampled rank-one
    envelope states; fails with the violating state recorded."""
    report = analytic_bounds(plan, envelope)
    rng = np.random.default_rng(seed)
    worst_lower = float("inf")
    worst_upper = 0.0
    for _ in range(samples):
        v = sample_envelope_state(plan.n_bus, envelope, rng)
        hv = plan.quadratic_forms(v)
        lhs = float(hv @ hv)
        vfro2 = float((np.abs(v) ** 2).sum() ** 2)    # ||v v^H||_F^2 = ||v||^4
        lo = report.m * vfro2
        hi = report.m_bound * vfro2
        if lhs < lo * (1.0 - rel_slack) or lhs > hi * (1.0 + rel_slack):
            return SandwichReport(passed=False, samples=samples,
                                  worst_lower_ratio=lhs / lo if lo > 0 else float("inf"),
                                  worst_upper_ratio=lhs / hi,
                                  violation_state=v)
        if lo > 0:
            worst_lower = min(worst_lower, lhs / lo)
        worst_upper = max(worst_upper, lhs / hi)
    return SandwichReport(passed=True, samples=samples,
                          worst_lower_ratio=worst_lower,
                          worst_upper_ratio=worst_upper)
