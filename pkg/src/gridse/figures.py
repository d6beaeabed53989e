"""Matplotlib rendering of solver traces, benchmark reports, and bound
checks.  Figures are written straight to files (headless backend) next to
the CSV/JSON artifacts produced by the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import BoundsReport, sample_envelope_state
from .harness import BenchmarkReport
from .measurements import MeasurementPlan
from .solvers import ConvergenceTrace

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


def save_trace_figure(trace: ConvergenceTrace, path: str,
                      title: str = "convergence") -> str:
    """Objective (and distance to truth, when recorded) against iteration."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        k = np.arange(len(trace.objective))
        ax.semilogy(k, np.maximum(trace.objective, 1e-300), label="objective")
        if trace.dist_to_truth:
            ax.semilogy(k[:len(trace.dist_to_truth)],
                        np.maximum(trace.dist_to_truth, 1e-300),
                        label="distance to truth")
        ax.set_xlabel("iteration")
        ax.set_ylabel("value")
        ax.set_title(f"{title} ({trace.termination_reason})")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return path


def save_report_figure(report: BenchmarkReport, path: str) -> str:
    """Per-trial RMSE with the mean, divergent trials marked."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        trials = [t.trial for t in report.trials]
        rmse = [t.rmse for t in report.trials]
        colors = ["tab:red" if t.failure else "tab:blue" for t in report.trials]
        ax.bar(trials, rmse, color=colors)
        if np.isfinite(report.mean_rmse):
            ax.axhline(report.mean_rmse, color="k", linestyle="--",
                       label=f"mean = {report.mean_rmse:.4g}")
            ax.legend()
        ax.set_xlabel("Monte-Carlo trial")
        ax.set_ylabel("RMSE")
        ax.set_title(f"{report.config.solver} on {report.config.case.rsplit('/', 1)[-1]}"
                     f" ({report.convergence_rate_pct:.0f}% converged)")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return path


def save_sandwich_figure(plan: MeasurementPlan, bounds: BoundsReport,
                         path: str, samples: int = 300, seed: int = 0) -> str:
    """Histogram of the sampled operator ratios against the m/M lines."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        v = sample_envelope_state(plan.n_bus, bounds.envelope, rng)
        hv = plan.quadratic_forms(v)
        ratios.append(float(hv @ hv) / float((np.abs(v) ** 2).sum() ** 2))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.hist(ratios, bins=40, color="tab:blue", alpha=0.8)
        ax.axvline(bounds.m, color="tab:green", linestyle="--",
                   label=f"m = {bounds.m:.3g}")
        ax.axvline(bounds.m_bound, color="tab:red", linestyle="--",
                   label=f"M = {bounds.m_bound:.3g}")
        ax.set_xlabel(r"$\|H(V)\|_2^2 / \|V\|_F^2$")
        ax.set_ylabel("count")
        ax.set_title("operator ratio over sampled envelope states")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return path
