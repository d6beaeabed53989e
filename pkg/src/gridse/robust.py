"""Outlier-robust descent via hard thresholding of measurement residuals.

The sparse outlier indicator tau keeps the gamma = ceil(rho*L) residuals of
largest magnitude; entries selected into tau contribute exactly zero to the
truncated gradient, so each step fits only the (L - gamma) best-explained
measurements.  Note the indicator *keeps* the largest entries (that is what
zeroes their gradient contribution); prose descriptions of the operator as
"throwing away" the largest values refer to this effect on the gradient.
PMU blocks are never thresholded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measurements import MeasurementPlan, remove_measurements
from .solvers import (ConvergenceTrace, FactorState, SolverConfig, _as_factor,
                      _descend, gradient_g)


@dataclass(frozen=True)
class OutlierIndicator:
    """Sparse residual indicator: tau vector, its support, and the budget."""

    tau: np.ndarray
    support: tuple[int, ...]
    budget: int

    def __post_init__(self):
        if len(self.support) > self.budget:
            raise ValueError(f"support size {len(self.support)} exceeds "
                             f"budget {self.budget}")


def hard_threshold(chi: np.ndarray, gamma: int) -> OutlierIndicator:
    """Keep the gamma largest-magnitude entries of chi, zero the rest.

    Ties in |chi| are broken toward the lower index so the operator is
    deterministic.
    """
    chi = np.asarray(chi, dtype=float)
    if not 0 <= gamma <= len(chi):
        raise ValueError(f"gamma must lie in [0, {len(chi)}], got {gamma}")
    tau = np.zeros_like(chi)
    if gamma == 0:
        return OutlierIndicator(tau=tau, support=(), budget=0)
    order = np.argsort(-np.abs(chi), kind="stable")
    support = np.sort(order[:gamma])
    tau[support] = chi[support]
    return OutlierIndicator(tau=tau, support=tuple(int(i) for i in support),
                            budget=gamma)


def _threshold_fn(chi: np.ndarray, gamma: int):
    ind = hard_threshold(chi, gamma)
    return ind.tau, ind.support


def outlier_budget(rho: float, n_measurements: int) -> int:
    """ceil(rho * L); the written fraction rho*L need not be an integer."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    return math.ceil(rho * n_measurements)


def truncated_gradient(u, plan: MeasurementPlan,
                       rho: float) -> tuple[np.ndarray, OutlierIndicator]:
    """Gradient sum_l 2*(u^H H_l u - z_l + tau_l) H_l u with
    tau = hard_threshold(z - h(u), ceil(rho*L))."""
    u = _as_factor(u)
    gamma = outlier_budget(rho, len(plan))
    if gamma == 0:
        grad = gradient_g(u, plan)
        return grad, OutlierIndicator(tau=np.zeros(len(plan)), support=(), budget=0)
    z = plan.z_vector()
    hu = plan.h_times(u)
    q = np.einsum("nc,lnc->l", u.conj(), hu).real
    ind = hard_threshold(z - q, gamma)
    c = q - z + ind.tau
    grad = 2.0 * np.einsum("l,lnc->nc", c, hu)
    return grad, ind


def rfgd_solve(plan: MeasurementPlan, u0, config: SolverConfig = SolverConfig(),
               rho: float = 0.0,
               v_true=None) -> tuple[FactorState, ConvergenceTrace]:
    """Factored gradient descent with per-step residual thresholding."""
    gamma = outlier_budget(rho, len(plan))
    return _descend(plan, u0, config, v_true, accelerate=False,
                    gamma=gamma, threshold_fn=_threshold_fn)


def ragd_solve(plan: MeasurementPlan, u0, config: SolverConfig = SolverConfig(),
               rho: float = 0.0,
               v_true=None) -> tuple[FactorState, ConvergenceTrace]:
    """Accelerated variant; residuals are thresholded at the interpolated
    point the gradient is taken at."""
    gamma = outlier_budget(rho, len(plan))
    return _descend(plan, u0, config, v_true, accelerate=True,
                    gamma=gamma, threshold_fn=_threshold_fn)


def identify_outliers(u, plan: MeasurementPlan, k: int) -> list[int]:
    """Indices of the k largest raw-unit deviations |z_l - u^H H_l u| / scale,
    in descending order (ties toward the lower index)."""
    if not 0 <= k <= len(plan):
        raise ValueError(f"k must lie in [0, {len(plan)}], got {k}")
    u = _as_factor(u)
    resid = plan.z_vector() - plan.quadratic_forms(u)
    raw = np.abs(resid) / plan.scale_vector()
    order = np.argsort(-raw, kind="stable")
    return [int(i) for i in order[:k]]


def drop_identified(plan: MeasurementPlan, u, k: int) -> MeasurementPlan:
    """Plan with the k worst-fitting measurements removed (post-solve
    cleanup before a Gauss-Newton polish)."""
    return remove_measurements(plan, identify_outliers(u, plan, k))
