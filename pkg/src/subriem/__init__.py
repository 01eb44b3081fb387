"""Numerical sub-Riemannian geometry on coordinate charts and matrix groups."""

from .abnormal import CodistState, abnormal_curve, kernel_K
from .chaplygin import (
    ChaplyginBundle,
    MatrixLieGroup,
    chart_structure,
    connection_eval,
    curvature_F,
    factorization_check,
    group_chaplygin,
    horizontal_lift,
    standard_extension_metric,
    wong_dynamics,
)
from .errors import SubRiemError
from .fieldspec import Expr, parse
from .geometry import (
    SRStructure,
    VectorField,
    bracket,
    growth_vector,
    levi_civita_christoffels,
    metric_extension,
    riemannian_geodesic,
    structure_functions,
    symbol_algebra,
)
from .hamiltonian import (
    CotangentState,
    hamiltonian_vector_field,
    initial_covector,
    normal_geodesic,
    poisson_bracket,
    sr_hamiltonian,
)
from .integrate import Trajectory
from .scenarios import load
from .schouten import (
    compare_straightest_shortest,
    parallel_transport,
    s_geodesic,
    schouten_christoffels,
    schouten_curvature,
)

__version__ = "0.1.0"
