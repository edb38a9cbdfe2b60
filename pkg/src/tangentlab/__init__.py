"""tangentlab: numerical certification of secant-set limit geometry and
separable null Lagrangians.

The package has two halves.  The geometry half extracts secant
intersection sets of C1 graphs on grids, computes Hausdorff distances and
approximate topological upper limits, and checks that converging secant
families collapse into the tangent set (detecting proper inclusions such
as the built-in flat-exponential counterexample).  The mechanics half
builds separable Lagrangians whose Euler-Lagrange equations vanish along
every C2 curve, verifies the exactness conditions behind that, evaluates
path-independent actions, and reconstructs potentials of exact pairs.
"""

from .errors import (
    ConfigError,
    DomainError,
    ParseError,
    TangentLabError,
    UnboundVariableError,
)
from .expr import Dual, Dual2, Expression, parse
from .numerics import (
    Box,
    DEFAULT_TOLERANCES,
    FdCheck,
    Grid,
    Tolerances,
    fd_check,
    find_roots,
    integrate_1d,
    richardson_delta,
)
from .compact_sets import (
    EpsSubset,
    PointCloudSet,
    SetSequence,
    approx_upper_limit,
    directed_hausdorff,
    eps_subset,
    hausdorff,
    min_dist,
    read_point_cloud,
    write_point_cloud,
)
from .secant_geometry import (
    CounterexampleDescription,
    HypersurfaceSpec,
    InclusionReport,
    SecantCoefficients,
    SurfaceSpec,
    coefficient_sequence,
    extract_secant_set,
    phi_counterexample,
    secant_residual,
    tangent_coefficients,
    verify_upper_limit_inclusion,
)
from .null_lagrangian import (
    Curve,
    DEFAULT_SAMPLE_GRID,
    EXAMPLE_GENERATORS,
    ElScan,
    ExactnessReport,
    GeneratorTriple,
    KineticEnergy,
    PotentialFunction,
    SeparableLagrangian,
    VelocityDependenceReport,
    action,
    action_richardson_delta,
    build_from_generators,
    endpoint_action,
    euler_lagrange_residual,
    exactness_residuals,
    example_lagrangian,
    max_euler_lagrange_residual,
    potential_from_exact_pair,
    velocity_dependence_report,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "TangentLabError",
    "ParseError",
    "UnboundVariableError",
    "DomainError",
    "ConfigError",
    # expressions
    "Expression",
    "Dual",
    "Dual2",
    "parse",
    # numerics
    "Box",
    "Grid",
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "integrate_1d",
    "richardson_delta",
    "find_roots",
    "fd_check",
    "FdCheck",
    # compact sets
    "PointCloudSet",
    "SetSequence",
    "min_dist",
    "directed_hausdorff",
    "hausdorff",
    "eps_subset",
    "EpsSubset",
    "approx_upper_limit",
    "write_point_cloud",
    "read_point_cloud",
    # secant geometry
    "SurfaceSpec",
    "HypersurfaceSpec",
    "SecantCoefficients",
    "secant_residual",
    "tangent_coefficients",
    "extract_secant_set",
    "coefficient_sequence",
    "verify_upper_limit_inclusion",
    "InclusionReport",
    "phi_counterexample",
    "CounterexampleDescription",
    # null Lagrangians
    "GeneratorTriple",
    "SeparableLagrangian",
    "Curve",
    "KineticEnergy",
    "PotentialFunction",
    "build_from_generators",
    "exactness_residuals",
    "ExactnessReport",
    "euler_lagrange_residual",
    "max_euler_lagrange_residual",
    "ElScan",
    "action",
    "action_richardson_delta",
    "endpoint_action",
    "potential_from_exact_pair",
    "velocity_dependence_report",
    "VelocityDependenceReport",
    "EXAMPLE_GENERATORS",
    "example_lagrangian",
    "DEFAULT_SAMPLE_GRID",
]
