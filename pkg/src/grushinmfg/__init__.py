"""State-constrained optimal control and Lagrangian mean field games for
planar dynamics y1' = a1, y2' = |y1|^nu * a2."""

from .dynamics import (
    AdmissibilityReport,
    ControlSignal,
    CostSpec,
    Trajectory,
    admissibility_check,
    cost,
    integrate,
    rescale_concat,
)
from .errors import (
    ConfigurationError,
    DomainError,
    GrushinError,
    SolverError,
    UnsupportedWitnessError,
)
from .geometry import (
    Band,
    BoundaryClass,
    Cone,
    ConstraintSet,
    CurveFn,
    CurveGraph,
    Rectangle,
    Sublevel,
    UnionSet,
    Witness,
    check_x1_convex,
    classify_point,
    contains,
    verify_hypotheses,
)
from .mfg import (
    AtomicMeasure,
    CouplingSpec,
    EquilibriumDiagnostics,
    TrajectoryMeasure,
    coupling_eval,
    exploitability,
    fictitious_play,
    mild_solution_extract,
    monotonicity_check,
    pushforward_at,
    wasserstein1,
)
from .ocp import (
    GridSpec,
    OcpSolution,
    SolveConfig,
    ValueGrid,
    closed_graph_probe,
    lsc_continuity_probe,
    solve_trajectory,
    value_grid_backward,
)
from .reachability import (
    ConnectResult,
    UnreachCertificate,
    cone_gronwall_bound,
    connect,
    truncated_cone_cost,
    uniform_modulus_probe,
    verify_reachability_sequence,
)

__version__ = "0.1.0"
