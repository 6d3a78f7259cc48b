"""Stochastic variance-reduced ADMM with momentum, plus baselines.

Solvers for linearly constrained finite-sum problems

    min_x,y  (1/n) sum_i f_i(x) + g(y)   s.t.  A x + B y = c

with smooth (possibly nonconvex) components f_i and a prox-friendly g.
Ships a momentum-accelerated variance-reduced driver, its plain
variance-reduced form, two single-sample baselines, the constant ledger
and potential-energy diagnostics behind the decrease analysis, and a
seeded Monte-Carlo benchmark harness with a CLI.
"""

from .bench import (
    ExperimentConfig,
    emit_plot_data,
    evaluate_accuracy,
    load_report,
    resolve_solver_config,
    run_experiment,
)
from .datasets import (
    Dataset,
    GraphMatrix,
    ParseError,
    build_graph_matrix,
    gen_quadratic_instance,
    parse_libsvm,
    serialize_libsvm,
    split_train_test,
)
from .gradients import (
    derive_run_seed,
    full_gradient,
    index_stream,
    svrg_gradient,
    take_snapshot,
)
from .linalg import RealMatrix, SpectralSummary, solve_spd, spectral_extremes, stack_rows
from .problems import (
    ConstrainedProblem,
    L1Regularizer,
    LogisticLoss,
    QuadraticLoss,
    SigmoidLoss,
    ZeroRegularizer,
    augmented_lagrangian,
    full_objective,
    lipschitz_estimate,
    soft_threshold,
)
from .solvers import (
    IterateState,
    SolveResult,
    SolverConfig,
    TraceRecord,
    run_asvrg_admm,
    run_sadmm,
    run_svrg_admm,
    solve,
)
from .theory import (
    ConstantLedger,
    TheoryParams,
    build_ledger,
    compute_betas,
    kkt_residual,
    linear_rate_fit,
    make_psi_hook,
    optimal_eta,
    optimal_theta,
    potential_energy,
    rho_lower_bound,
    theorem1_check,
    theory_params_for,
    theory_report,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "emit_plot_data",
    "evaluate_accuracy",
    "load_report",
    "resolve_solver_config",
    "run_experiment",
    "Dataset",
    "GraphMatrix",
    "ParseError",
    "build_graph_matrix",
    "gen_quadratic_instance",
    "parse_libsvm",
    "serialize_libsvm",
    "split_train_test",
    "derive_run_seed",
    "full_gradient",
    "index_stream",
    "svrg_gradient",
    "take_snapshot",
    "RealMatrix",
    "SpectralSummary",
    "solve_spd",
    "spectral_extremes",
    "stack_rows",
    "ConstrainedProblem",
    "L1Regularizer",
    "LogisticLoss",
    "QuadraticLoss",
    "SigmoidLoss",
    "ZeroRegularizer",
    "augmented_lagrangian",
    "full_objective",
    "lipschitz_estimate",
    "soft_threshold",
    "IterateState",
    "SolveResult",
    "SolverConfig",
    "TraceRecord",
    "run_asvrg_admm",
    "run_sadmm",
    "run_svrg_admm",
    "solve",
    "ConstantLedger",
    "TheoryParams",
    "build_ledger",
    "compute_betas",
    "kkt_residual",
    "linear_rate_fit",
    "make_psi_hook",
    "optimal_eta",
    "optimal_theta",
    "potential_energy",
    "rho_lower_bound",
    "theorem1_check",
    "theory_params_for",
    "theory_report",
    "__version__",
]
