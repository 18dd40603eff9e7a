"""Piecewise-affine barrier functions for continuous PWA systems, found by
linear programming over cell vertices with vector-field refinement."""
from .barrier_lp import (
    AlphaGain,
    BarrierCandidate,
    Epsilons,
    LpProblem,
    SlackReport,
    assemble,
    flagged_cells,
    is_valid,
    maximality_gap,
    solve,
    synthesize_once,
)
from .exceptions import (
    DegenerateInput,
    DegeneratePolytope,
    DegenerateRegionWarning,
    DimensionMismatch,
    EmptyPartition,
    EmptyPolytope,
    GeometryError,
    InvalidPartition,
    NotTwoDimensional,
    OutOfDomain,
    PwaError,
    SamplingFailure,
    SolverFailure,
    SolverTimeLimit,
    TooManyNeurons,
    UnboundedPolytope,
)
from .geometry import HPolytope, VPolytope, box, delaunay, hrep_of, vertices_of
from .pwa import (
    Cell,
    IndexSets,
    PwaDynamics,
    build_index_sets,
    check_continuity,
    conformity_violations,
    evaluate_dynamics,
)
from .refine import refine_partition
from .relu import ReluNet, enumerate_regions
from .search import Status, SynthesisResult, bisect_alpha, synthesize
from .verify import (
    CertificateReport,
    Trajectory,
    check_certificate,
    evaluate_barrier,
    invariance_test,
    normalize_barrier,
    simulate,
)

__version__ = "0.1.0"
