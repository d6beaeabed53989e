"""First-order and Gauss-Newton estimators on the factored quadratic model.

The estimation problem is min_u g(u) = sum_l 0.5*(z_l - u^H H_l u)^2 over a
complex N x r factor (r = 1 by default), optionally augmented with linear
PMU terms 0.5*||zeta_n - Phi_n u||^2.  Gradients follow the complex
convention  grad = d/dRe(u) + j d/dIm(u),  which for the quadratic terms
gives  sum_l 2*(u^H H_l u - z_l) H_l u.
"""

from __future__ import annotations

import csv
import io
import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .measurements import MeasurementPlan


class DivergenceError(RuntimeError):
    """Non-finite objective during descent; carries the trace so far."""

    def __init__(self, message: str, trace: "ConvergenceTrace"):
        super().__init__(message)
        self.trace = trace


class UnobservableSystemError(RuntimeError):
    """Singular Gauss-Newton normal matrix."""


class PowerIterationError(RuntimeError):
    """Spectral-norm estimate did not converge; carries the best estimate."""

    def __init__(self, message: str, best: float):
        super().__init__(message)
        self.best = best


class DegenerateMatrixError(ValueError):
    """Rank-one extraction on a matrix with no positive leading eigenvalue."""


class UnsupportedConfigurationError(ValueError):
    """Operation requested with an incompatible rank / plan combination."""


@dataclass
class FactorState:
    """Solver state: the complex N x r factor representing V = u u^H."""

    u: np.ndarray
    iteration: int = 0

    @property
    def vector(self) -> np.ndarray:
        if self.u.shape[1] != 1:
            raise UnsupportedConfigurationError("rank > 1 state has no single vector")
        return self.u[:, 0]


@dataclass(frozen=True)
class SolverConfig:
    step_size: float | None = None   # None selects the auto rule
    step_scale: float = 1.0 / 16.0
    max_iters: int = 50_000
    tol_iterate: float = 1e-7        # relative ||u_{k+1}-u_k||_F / ||u_k||_F
    tol_objective: float = 1e-9      # relative objective change
    tol_gradient: float = 1e-8       # Gauss-Newton first-order stop
    momentum: float | None = None    # None -> (k-2)/(k+1) schedule; else constant
    rank: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.step_size is not None and not self.step_size >= 0:
            raise ValueError("step_size must be >= 0")
        if self.momentum is not None and not 0.0 <= self.momentum < 1.0:
            raise ValueError("constant momentum must satisfy 0 <= mu < 1")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SolverConfig":
        return cls(**json.loads(text))


@dataclass
class ConvergenceTrace:
    objective: list[float] = field(default_factory=list)
    dist_to_truth: list[float] = field(default_factory=list)
    iterate_change: list[float] = field(default_factory=list)
    elapsed_ms: list[float] = field(default_factory=list)
    termination_reason: str = "max_iters"
    diverged: bool = False
    support_history: list[tuple[int, ...]] | None = None

    def __len__(self) -> int:
        return len(self.objective)

    @property
    def iterations(self) -> int:
        return max(0, len(self.objective) - 1)

    def write_csv(self, target) -> None:
        """CSV with columns (iter, objective, dist_to_truth, iterate_change,
        elapsed_ms); dist column empty when no truth was supplied."""
        own = isinstance(target, (str, bytes))
        fh = open(target, "w", newline="") if own else target
        try:
            w = csv.writer(fh)
            w.writerow(["iter", "objective", "dist_to_truth", "iterate_change",
                        "elapsed_ms"])
            for k in range(len(self.objective)):
                dist = self.dist_to_truth[k] if k < len(self.dist_to_truth) else ""
                change = self.iterate_change[k] if k < len(self.iterate_change) else ""
                w.writerow([k, self.objective[k], dist, change,
                            self.elapsed_ms[k]])
        finally:
            if own:
                fh.close()

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _as_factor(u, rank: int | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2:
        raise ValueError(f"factor must be a vector or N x r matrix, got {u.shape}")
    if rank is not None and u.shape[1] not in (rank, 1):
        raise ValueError(f"factor rank {u.shape[1]} does not match config rank {rank}")
    return u


# ---------------------------------------------------------------------------
# Objective and gradients
# ---------------------------------------------------------------------------

def objective_g(u, plan: MeasurementPlan) -> float:
    """Legacy least-squares objective 0.5 * sum (z_l - u^H H_l u)^2."""
    u = _as_factor(u)
    resid = plan.z_vector() - plan.quadratic_forms(u)
    return 0.5 * float(resid @ resid)


def _pmu_objective(u: np.ndarray, plan: MeasurementPlan) -> float:
    total = 0.0
    for blk in plan.pmu_blocks:
        e = blk.phi @ u[:, 0] - blk.zeta
        total += 0.5 * float(np.vdot(e, e).real)
    return total


def _pmu_gradient(u: np.ndarray, plan: MeasurementPlan) -> np.ndarray:
    g = np.zeros(plan.n_bus, dtype=complex)
    for blk in plan.pmu_blocks:
        g += blk.phi.conj().T @ (blk.phi @ u[:, 0] - blk.zeta)
    return g[:, None]


def objective_augmented(u, plan: MeasurementPlan) -> float:
    """Legacy objective plus 0.5 * sum_n ||zeta_n - Phi_n u||^2."""
    u = _as_factor(u)
    if plan.has_pmu and u.shape[1] != 1:
        raise UnsupportedConfigurationError("PMU augmentation requires rank 1")
    return objective_g(u, plan) + _pmu_objective(u, plan)


def gradient_g(u, plan: MeasurementPlan) -> np.ndarray:
    """sum_l 2*(u^H H_l u - z_l) H_l u, shaped like u."""
    u = _as_factor(u)
    hu = plan.h_times(u)
    c = plan.quadratic_forms(u) - plan.z_vector()
    return 2.0 * np.einsum("l,lnc->nc", c, hu)


def gradient_augmented(u, plan: MeasurementPlan) -> np.ndarray:
    """Gradient of the PMU-augmented objective; equals gradient_g when the
    plan carries no PMU blocks."""
    u = _as_factor(u)
    if not plan.has_pmu:
        return gradient_g(u, plan)
    if u.shape[1] != 1:
        raise UnsupportedConfigurationError("PMU augmentation requires rank 1")
    return gradient_g(u, plan) + _pmu_gradient(u, plan)


# ---------------------------------------------------------------------------
# Spectral norms and the auto step size
# ---------------------------------------------------------------------------

def power_iteration_norm(matvec: Callable[[np.ndarray], np.ndarray], n: int,
                         tol: float = 1e-8, max_iters: int = 500,
                         seed: int = 0) -> float:
    """Spectral norm of a Hermitian operator via power iteration on A^2.

    Squaring makes the iteration insensitive to eigenvalue sign.  Raises
    PowerIterationError (carrying the best estimate) on non-convergence.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iters):
        y = matvec(matvec(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        new_est = float(np.sqrt(ny))
        x = y / ny
        if abs(new_est - est) <= tol * max(new_est, 1e-300):
            return new_est
        est = new_est
    raise PowerIterationError(
        f"power iteration did not converge in {max_iters} iterations", best=est)


def _gradf_coeffs(plan: MeasurementPlan, u: np.ndarray) -> np.ndarray:
    """Coefficients c_l with grad f(V) = sum_l c_l H_l at V = u u^H."""
    return plan.quadratic_forms(u) - plan.z_vector()


def _coeff_matrix(plan: MeasurementPlan, c: np.ndarray) -> sp.csr_matrix:
    """Assembles sum_l c_l H_l as one sparse matrix."""
    n = plan.n_bus
    mix = sp.kron(sp.csr_matrix(np.asarray(c)[None, :]), sp.identity(n, format="csr"))
    return (mix @ plan._h_stack).tocsr()


def _factored_fro_dist(a: np.ndarray, b: np.ndarray) -> float:
    """||a a^H - b b^H||_F via Gram matrices (never forms the N x N outer)."""
    gaa = np.linalg.norm(a.conj().T @ a) ** 2
    gbb = np.linalg.norm(b.conj().T @ b) ** 2
    gab = np.linalg.norm(a.conj().T @ b) ** 2
    return float(np.sqrt(max(0.0, gaa + gbb - 2.0 * gab)))


def auto_step_size(plan: MeasurementPlan, u0, step_scale: float = 1.0 / 16.0,
                   seed: int = 0, tol: float = 1e-8, max_iters: int = 500) -> float:
    """Step size  step_scale / (M ||V0||_2 + ||grad f(V0)||_2)  at V0 = u0 u0^H.

    The smoothness constant M is estimated with the difference quotient
    ||grad f(V0) - grad f(V1)||_F / ||V0 - V1||_F at a seeded perturbation
    u1 = u0 + delta with ||delta||_F = 1e-3 ||u0||_F.  Spectral norms come
    from power iteration.  When PMU blocks are present their (constant)
    curvature ||stack(Phi)||_2^2 is added to the denominator so the
    augmented gradient remains a descent direction at this step.
    """
    u0 = _as_factor(u0)
    n = plan.n_bus
    if not np.any(u0):
        raise ValueError("u0 must be nonzero")

    norm_v0 = power_iteration_norm(lambda x: u0 @ (u0.conj().T @ x), n,
                                   tol=tol, max_iters=max_iters, seed=seed)

    c0 = _gradf_coeffs(plan, u0)
    hstack = plan._h_stack

    def gradf_matvec(x: np.ndarray) -> np.ndarray:
        hx = (hstack @ x).reshape(len(c0), n)
        return np.einsum("l,ln->n", c0, hx)

    norm_gradf = power_iteration_norm(gradf_matvec, n, tol=tol,
                                      max_iters=max_iters, seed=seed + 1)

    rng = np.random.default_rng(seed)
    delta = rng.standard_normal(u0.shape) + 1j * rng.standard_normal(u0.shape)
    delta *= 1e-3 * np.linalg.norm(u0) / np.linalg.norm(delta)
    u1 = u0 + delta
    c1 = _gradf_coeffs(plan, u1)
    diff = _coeff_matrix(plan, c0 - c1)
    denom_v = _factored_fro_dist(u0, u1)
    m_est = float(np.linalg.norm(diff.data)) / denom_v if denom_v > 0 else 0.0

    denom = m_est * norm_v0 + norm_gradf
    if plan.has_pmu:
        phi_all = np.vstack([blk.phi for blk in plan.pmu_blocks])
        denom += float(np.linalg.norm(phi_all, 2) ** 2)
    if denom <= 0.0:
        raise ValueError("degenerate problem: zero curvature and zero gradient")
    return step_scale / denom


# ---------------------------------------------------------------------------
# Descent engine (shared by FGD/AGD and their robust variants)
# ---------------------------------------------------------------------------

def nesterov_momentum(k: int) -> float:
    """Time-varying momentum (k-2)/(k+1); negative at k = 1 by design."""
    return (k - 2.0) / (k + 1.0)


def _descend(plan: MeasurementPlan, u0, config: SolverConfig,
             v_true=None, *, accelerate: bool,
             gamma: int = 0, threshold_fn=None) -> tuple[FactorState, ConvergenceTrace]:
    u = _as_factor(u0, config.rank)
    if plan.has_pmu and u.shape[1] != 1:
        raise UnsupportedConfigurationError("PMU augmentation requires rank 1")
    z = plan.z_vector()
    truth = None if v_true is None else np.asarray(v_true, dtype=complex)
    if config.step_size is not None:
        eta = config.step_size
    else:
        try:
            eta = auto_step_size(plan, u, step_scale=config.step_scale,
                                 seed=config.seed)
        except PowerIterationError:
            # near-degenerate spectrum; a coarser norm is still far more
            # accurate than the 1/16 heuristic requires
            eta = auto_step_size(plan, u, step_scale=config.step_scale,
                                 seed=config.seed, tol=1e-5)

    n, r = u.shape
    hstack = plan._h_stack
    trace = ConvergenceTrace()
    if gamma > 0:
        trace.support_history = []
    start = time.perf_counter()

    def forms(x):
        """(H_l x stacked, quadratic forms) in one operator application.

        Overflow here means a divergent iterate; the caller detects the
        non-finite objective and raises, so the warnings are suppressed.
        """
        with np.errstate(over="ignore", invalid="ignore"):
            hx = (hstack @ x).reshape(len(z), n * r)
            return hx, (hx @ x.conj().ravel()).real

    def pmu_obj(x):
        return _pmu_objective(x, plan) if plan.has_pmu else 0.0

    def record(x, obj, change):
        trace.objective.append(obj)
        trace.iterate_change.append(change)
        if truth is not None:
            trace.dist_to_truth.append(_dist_to_truth(x, truth))
        trace.elapsed_ms.append((time.perf_counter() - start) * 1e3)

    def loss_from(q, x):
        chi = z - q
        if gamma > 0:
            tau, _ = threshold_fn(chi, gamma)
            chi = chi - tau
        return 0.5 * float(chi @ chi) + pmu_obj(x)

    hu, q = forms(u)
    obj = loss_from(q, u)
    record(u, obj, 0.0)
    prev_u = None

    for k in range(config.max_iters):
        if accelerate and k >= 1:
            mu = nesterov_momentum(k) if config.momentum is None \
                else config.momentum
            if mu != 0.0:
                u_plus = u + mu * (u - prev_u)
                hu_plus, q_plus = forms(u_plus)
            else:
                u_plus, hu_plus, q_plus = u, hu, q
        else:
            u_plus, hu_plus, q_plus = u, hu, q

        if gamma > 0:
            tau, support = threshold_fn(z - q_plus, gamma)
            c = q_plus - z + tau
            trace.support_history.append(tuple(support))
        else:
            c = q_plus - z
        grad = 2.0 * (c @ hu_plus).reshape(n, r)
        if plan.has_pmu:
            grad = grad + _pmu_gradient(u_plus, plan)

        u_next = u_plus - eta * grad
        hu_next, q_next = forms(u_next)
        obj_next = loss_from(q_next, u_next)
        if not np.isfinite(obj_next):
            trace.diverged = True
            trace.termination_reason = "diverged"
            record(u_next, obj_next, float("nan"))
            raise DivergenceError(f"non-finite objective at iteration {k + 1}", trace)

        change = float(np.linalg.norm(u_next - u) /
                       max(np.linalg.norm(u), 1e-300))
        record(u_next, obj_next, change)
        prev_u, u = u, u_next
        hu, q = hu_next, q_next

        if change < config.tol_iterate:
            trace.termination_reason = "tol_iterate"
            break
        if abs(obj_next - obj) <= config.tol_objective * max(abs(obj), 1e-300):
            trace.termination_reason = "tol_objective"
            break
        obj = obj_next
    else:
        trace.termination_reason = "max_iters"

    return FactorState(u=u, iteration=len(trace.objective) - 1), trace


def fgd_solve(plan: MeasurementPlan, u0, config: SolverConfig = SolverConfig(),
              v_true=None) -> tuple[FactorState, ConvergenceTrace]:
    """Plain factored gradient descent u <- u - eta * grad(u)."""
    return _descend(plan, u0, config, v_true, accelerate=False)


def agd_solve(plan: MeasurementPlan, u0, config: SolverConfig = SolverConfig(),
              v_true=None) -> tuple[FactorState, ConvergenceTrace]:
    """Accelerated descent: first step plain, then descend from the
    interpolated point u+ = u_k + mu_k (u_k - u_{k-1})."""
    return _descend(plan, u0, config, v_true, accelerate=True)


# ---------------------------------------------------------------------------
# Gauss-Newton baseline and refinement
# ---------------------------------------------------------------------------

def _gauge_rotate(v: np.ndarray, slack: int) -> np.ndarray:
    """Rotate so the slack entry is real non-negative."""
    s = v[slack]
    if s == 0:
        return v.copy()
    return v * (s.conjugate() / abs(s))


def _gn_system(plan: MeasurementPlan, z: np.ndarray, v: np.ndarray, slack: int):
    """Residual, Jacobian (gauge column removed) and first-order residual."""
    hu = plan.h_times(v)
    resid = z - np.einsum("n,ln->l", v.conj(), hu).real
    jac = np.concatenate([2.0 * hu.real, 2.0 * hu.imag], axis=1)
    jac = np.delete(jac, plan.n_bus + slack, axis=1)
    jt_r = jac.T @ resid
    return resid, jac, jt_r


def _gn_apply(v: np.ndarray, delta: np.ndarray, slack: int, n: int) -> np.ndarray:
    re = v.real.copy() + delta[:n]
    im = v.imag.copy()
    im[np.arange(n) != slack] += delta[n:]
    return re + 1j * im


def gn_solve(plan: MeasurementPlan, v0, config: SolverConfig | None = None,
             v_true=None) -> tuple[np.ndarray, ConvergenceTrace]:
    """Gauss-Newton on the rectangular parameterization [Re v; Im v] with the
    slack-bus imaginary part pinned to zero.

    Terminates on ||J^T r||_inf < tol_gradient, on max_iters, or with the
    divergence flag after five consecutive objective increases (or a
    non-finite objective).  A singular normal matrix raises
    UnobservableSystemError.
    """
    if config is None:
        config = SolverConfig(max_iters=25)
    z = plan.z_vector()
    slack = plan.network.slack_index
    n = plan.n_bus
    v = _gauge_rotate(np.asarray(v0, dtype=complex).reshape(-1), slack)
    truth = None if v_true is None else np.asarray(v_true, dtype=complex)

    trace = ConvergenceTrace()
    start = time.perf_counter()

    def record(x, obj, change):
        trace.objective.append(obj)
        trace.iterate_change.append(change)
        if truth is not None:
            trace.dist_to_truth.append(distance(x, truth))
        trace.elapsed_ms.append((time.perf_counter() - start) * 1e3)

    resid, jac, jt_r = _gn_system(plan, z, v, slack)
    obj = 0.5 * float(resid @ resid)
    record(v, obj, 0.0)
    growth = 0

    for _ in range(config.max_iters):
        if np.linalg.norm(jt_r, np.inf) < config.tol_gradient:
            trace.termination_reason = "tol_gradient"
            break
        try:
            cho = scipy.linalg.cho_factor(jac.T @ jac)
            delta = scipy.linalg.cho_solve(cho, jt_r)
        except scipy.linalg.LinAlgError as exc:
            raise UnobservableSystemError(
                f"singular Gauss-Newton normal matrix: {exc}") from None
        v_next = _gn_apply(v, delta, slack, n)
        resid, jac, jt_r = _gn_system(plan, z, v_next, slack)
        obj_next = 0.5 * float(resid @ resid)
        change = float(np.linalg.norm(v_next - v) / max(np.linalg.norm(v), 1e-300))
        record(v_next, obj_next, change)
        v = v_next
        if not np.isfinite(obj_next):
            trace.diverged = True
            trace.termination_reason = "diverged"
            break
        growth = growth + 1 if obj_next > obj else 0
        obj = obj_next
        if growth >= 5:
            trace.diverged = True
            trace.termination_reason = "diverged"
            break
    else:
        trace.termination_reason = "max_iters"

    return v, trace


def gn_refine(plan: MeasurementPlan, u, max_iters: int = 5) -> np.ndarray:
    """A few Gauss-Newton polishing steps from a factored solution; returns
    the best iterate by objective (never worse than the input).  On a
    Gauss-Newton failure the input is returned with a warning."""
    u = _as_factor(u)
    if u.shape[1] != 1:
        raise UnsupportedConfigurationError("refinement requires a rank-1 factor")
    v0 = u[:, 0]
    z = plan.z_vector()
    slack = plan.network.slack_index
    n = plan.n_bus
    v = _gauge_rotate(np.asarray(v0, dtype=complex).reshape(-1), slack)
    best_v, best_obj = v, None
    try:
        for _ in range(max_iters + 1):
            resid, jac, jt_r = _gn_system(plan, z, v, slack)
            obj = 0.5 * float(resid @ resid)
            if best_obj is None or (np.isfinite(obj) and obj < best_obj):
                best_v, best_obj = v, obj
            if not np.isfinite(obj):
                break
            cho = scipy.linalg.cho_factor(jac.T @ jac)
            v = _gn_apply(v, scipy.linalg.cho_solve(cho, jt_r), slack, n)
    except scipy.linalg.LinAlgError:
        warnings.warn("Gauss-Newton refinement failed (singular normal matrix); "
                      "returning the unrefined state", RuntimeWarning)
        return v0.copy()
    return best_v


# ---------------------------------------------------------------------------
# Distance, extraction, initialization
# ---------------------------------------------------------------------------

def _dist_to_truth(u: np.ndarray, truth: np.ndarray) -> float:
    """distance() against a vector truth regardless of the factor rank."""
    if truth.ndim == 1 and u.ndim == 2:
        if u.shape[1] == 1:
            return distance(u[:, 0], truth)
        padded = np.zeros_like(u)
        padded[:, 0] = truth
        return distance(u, padded)
    return distance(u, truth)


def distance(u, v) -> float:
    """Euclidean distance minimized over the rotational ambiguity.

    Rank 1: global phase alignment; rank > 1: orthogonal-Procrustes unitary
    alignment.  Computed on the aligned difference, which is numerically
    exact for truly phase-equivalent inputs.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    if u.ndim == 1 or u.shape[1] == 1:
        uf, vf = u.ravel(), v.ravel()
        c = np.vdot(vf, uf)            # v^H u
        if abs(c) > 0:
            uf = uf * (c.conjugate() / abs(c))
        return float(np.linalg.norm(uf - vf))
    w, _, xh = np.linalg.svd(u.conj().T @ v)
    return float(np.linalg.norm(u @ (w @ xh) - v))


def rank_one_extract(v_mat, slack: int = 0, tol: float = 1e-10,
                     max_iters: int = 500, seed: int = 0) -> np.ndarray:
    """Best rank-one factor sqrt(lambda_1) q_1 of a Hermitian PSD matrix via
    power iteration; the slack entry is rotated to be real non-negative."""
    n = v_mat.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iters):
        y = v_mat @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            raise DegenerateMatrixError("matrix annihilated the iterate")
        x = np.asarray(y / ny).reshape(-1)
        new_lam = float(np.vdot(x, np.asarray(v_mat @ x).reshape(-1)).real)
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1e-300):
            lam = new_lam
            break
        lam = new_lam
    if lam <= 0.0:
        raise DegenerateMatrixError(f"leading eigenvalue {lam} is not positive")
    u = np.sqrt(lam) * x
    return _gauge_rotate(u, slack)


def _measured_magnitudes(plan: MeasurementPlan) -> np.ndarray:
    from .measurements import MeasurementType
    mag = np.ones(plan.n_bus)
    for m in plan.measurements:
        if m.kind.mtype is MeasurementType.VMAG_SQ and m.z is not None:
            z_raw = m.z / m.scale
            mag[m.kind.bus] = np.clip(np.sqrt(max(z_raw, 0.0)), 0.5, 1.5)
    return mag


def flat_initialize(plan: MeasurementPlan) -> np.ndarray:
    """Measured (or unit) magnitudes at zero phase angle."""
    return _measured_magnitudes(plan).astype(complex)


def dc_initialize(plan: MeasurementPlan) -> np.ndarray:
    """Measured (or unit) magnitudes with angles from the linear dc model.

    Solves the least-squares dc system built from the active-power meters
    (flow rows b*(theta_n - theta_n'), injection rows summing incident
    susceptances b = 1/x) with the slack angle pinned at zero.  Falls back
    to the flat start, with a warning, when no active-power meters exist.
    """
    from .measurements import MeasurementType
    net = plan.network
    n = net.n_bus
    slack = net.slack_index
    rows, rhs = [], []
    for m in plan.measurements:
        if m.z is None:
            continue
        row = np.zeros(n)
        if m.kind.mtype is MeasurementType.P_FLOW:
            br = net.branches[m.kind.branch]
            if br.x == 0.0:
                continue
            b = 1.0 / br.x
            lead, other = ((br.from_idx, br.to_idx) if m.kind.from_end
                           else (br.to_idx, br.from_idx))
            row[lead] += b
            row[other] -= b
        elif m.kind.mtype is MeasurementType.P_INJ:
            bus = m.kind.bus
            for _, br in net.in_service_branches():
                if br.x == 0.0 or bus not in (br.from_idx, br.to_idx):
                    continue
                b = 1.0 / br.x
                other = br.to_idx if br.from_idx == bus else br.from_idx
                row[bus] += b
                row[other] -= b
        else:
            continue
        rows.append(row)
        rhs.append(m.z / m.scale)
    mag = _measured_magnitudes(plan)
    if not rows:
        warnings.warn("no active-power measurements; falling back to flat start",
                      RuntimeWarning)
        return mag.astype(complex)
    a = np.vstack(rows)
    keep = np.arange(n) != slack
    theta = np.zeros(n)
    sol, *_ = np.linalg.lstsq(a[:, keep], np.asarray(rhs), rcond=None)
    theta[keep] = sol
    return mag * np.exp(1j * theta)
