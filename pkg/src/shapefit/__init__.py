"""Corruption-robust location recovery from pairwise direction observations.

ShapeFit, its kicked variant ShapeKick, and the LUD baseline, all built on
one ADMM engine, plus a synthetic instance generator, gauge-invariant
metrics, a slow reference oracle and a benchmark CLI.
"""

from .admm import (
    AdmmConfig,
    GraphSystem,
    SolverState,
    admm_step,
    incidence_adjoint,
    incidence_apply,
    run,
    shapefit_objective,
    shrink_prox,
    t_update,
)
from .generate import (
    BipartiteSpec,
    GenConfig,
    GenerationError,
    RandomStream,
    generate,
    generate_bipartite,
    inject_corruption,
)
from .io import read_instance, read_result, write_instance, write_result
from .metrics import (
    EXACT_RFE_THRESHOLD,
    SummaryStats,
    TrialSummary,
    rfe,
    summarize,
    write_trials_csv,
)
from .model import (
    DirectionGraph,
    GenParams,
    PointCloud,
    ProblemInstance,
    SolveReport,
    apply_gauge,
    gauge_residuals,
    validate_instance,
)
from .oracle import OracleConfig, oracle_lud, oracle_shapefit
from .solvers import (
    KickConfig,
    LudState,
    lud_objective,
    solve_lud,
    solve_shapefit,
    solve_shapekick,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "BipartiteSpec",
    "DirectionGraph",
    "EXACT_RFE_THRESHOLD",
    "GenConfig",
    "GenParams",
    "GenerationError",
    "GraphSystem",
    "KickConfig",
    "LudState",
    "OracleConfig",
    "PointCloud",
    "ProblemInstance",
    "RandomStream",
    "SolveReport",
    "SolverState",
    "SummaryStats",
    "TrialSummary",
    "admm_step",
    "apply_gauge",
    "gauge_residuals",
    "generate",
    "generate_bipartite",
    "incidence_adjoint",
    "incidence_apply",
    "inject_corruption",
    "lud_objective",
    "oracle_lud",
    "oracle_shapefit",
    "read_instance",
    "read_result",
    "rfe",
    "run",
    "shapefit_objective",
    "shrink_prox",
    "solve_lud",
    "solve_shapefit",
    "solve_shapekick",
    "summarize",
    "t_update",
    "validate_instance",
    "write_instance",
    "write_result",
    "write_trials_csv",
]
