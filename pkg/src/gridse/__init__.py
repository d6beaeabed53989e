"""gridse: state estimation for power transmission grids.

Recovers nodal complex voltages from quadratic (SCADA) and linear (PMU)
measurements by gradient descent on the factored nonconvex least-squares
objective, with accelerated and outlier-robust variants, a Gauss-Newton
baseline, envelope-based conditioning analysis, and a Monte-Carlo benchmark
harness.
"""

from .network import (Branch, Bus, BusType, CaseError, CaseSemanticError,
                      CaseSyntaxError, Network, build_admittance, load_case,
                      network_to_json, parse_case)
from .measurements import (Measurement, MeasurementKind, MeasurementPlan,
                           MeasurementType, NoiseSigmas, PmuBlock,
                           VoltageEnvelope, build_h_matrix, build_pmu_matrix,
                           default_plan, evaluate, generate, normalize,
                           plan_from_json, plan_to_json, remove_measurements)
from .solvers import (ConvergenceTrace, DivergenceError, FactorState,
                      SolverConfig, UnobservableSystemError, agd_solve,
                      auto_step_size, dc_initialize, distance, fgd_solve,
                      flat_initialize, gn_refine, gn_solve, gradient_augmented,
                      gradient_g, objective_augmented, objective_g,
                      rank_one_extract)
from .robust import (OutlierIndicator, hard_threshold, identify_outliers,
                     ragd_solve, rfgd_solve, truncated_gradient)
from .analysis import (BoundsReport, SandwichReport, analytic_bounds,
                       empirical_smoothness, verify_sandwich)
from .harness import (BenchmarkReport, ExperimentConfig, OutlierSpec,
                      run_experiment, sample_true_state, validate_report)

__version__ = "0.1.0"
