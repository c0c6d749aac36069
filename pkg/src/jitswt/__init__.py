"""Guarded piecewise-linear transducers with just-in-time refinement."""

from .errors import (
    ArityMismatch,
    GeometryError,
    Infeasible,
    InfeasibleLeaf,
    JitSwtError,
    NotRefined,
    NumericalFailure,
    OracleError,
    SchemaError,
    ShapeError,
    SubstitutionError,
    Unbounded,
    Unsupported,
    UnsupportedLayer,
    UnsupportedNormPair,
    WrongLabel,
    ZeroNormal,
)
from .analysis import (
    AffineFragment,
    BoundaryPiece,
    ExtremumOutcome,
    JacobianResult,
    LipschitzResult,
    RegionTable,
    decision_boundary,
    extract_regions,
    extremum,
    hard_norm_bracket,
    jacobian_at,
    lipschitz,
    operator_norm,
    sigma_max,
)
from .bnb import ArchivedLeaf, Certificate, minimize_on_leaf, run as bnb_run
from .properties import (
    Intervention,
    PropertySpec,
    certify_robustness,
    check_equivalence,
    check_equivariance,
    compile_objective,
    conv_shift_equivariance,
    domain_from_dict,
    gcn_permutation_equivariance,
    imax,
    merge_graphs,
    parse_intervention,
    parse_property_spec,
    permute_gcn,
    rank_channels,
    shift_geometry,
    shift_matrix,
    verify,
)
from .compiler import (
    GateSite,
    SwtGraph,
    compile_model,
    layer_linear_map,
    sign_split_plane,
    structural_counts,
)
from .engine import Budget, JitEngine, Leaf, RefineResult
from .exprs import BoundsCache, BoundsInterval, ExprStore, bounds, eval_many, try_collapse_affine
from .guards import GuardLibrary, GuardSet, Halfspace, canonicalize_halfspace
from .lp import DenseSimplex, LpResult, solve_lp
from .model import NetworkModel, load_model, model_to_dict
from .oracle import (
    Box,
    Counters,
    InputDomain,
    L1Ball,
    L2Ball,
    LinearOracle,
    LinfBall,
    Polytope,
    min_norm_in_hull,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
