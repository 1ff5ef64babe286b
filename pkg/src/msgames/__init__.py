"""Schmidt-type games under contracting flows, with winning strategies on
the space of unimodular lattices and Diophantine certification tools."""

from msgames.contraction import (
    AdmissibleBase,
    ContractionSemigroup,
    Domain,
    MismatchedContext,
    TooSmallScale,
    apply,
    calibrate_c0,
    compute_a_star,
    diameter_bound,
    fits_inside,
    legal_offset_box,
    mutual_squeeze_scale,
    parallelotope_distance,
    two_separated_translates,
)
from msgames.game_engine import (
    GameSetup,
    GameTrace,
    InvalidMove,
    Move,
    Schedule,
    TraceFormatError,
    intersection_point,
    play,
    read_trace,
    replay_check,
    validate_move,
    write_trace,
)
from msgames.homogeneous import (
    DimensionTooLarge,
    LatticeBasis,
    RepresentationData,
    WeightVector,
    dangerous_vectors,
    expanding_check,
    flow,
    flow_distance,
    phi_poly,
    systole,
    u_of,
    wedge_basis,
)
from msgames.diophantine import (
    BadReport,
    CFExpansion,
    DaniReport,
    bad_margin,
    continued_fraction,
    dani_audit,
    estimate_box_dimension,
    orbit_floor,
    write_audit_csv,
)
from msgames.strategies import (
    AvoidanceTarget,
    BoundedStrategyState,
    CalibrationFailure,
    NoSafeBall,
    NoScaleFound,
    TooManyDangerous,
    alice_avoid,
    alice_dummy,
    alice_intersect,
    alice_stay_bounded,
    bob_cusp_seeking,
    bob_random,
    bob_target_seeking,
    calibrate_transversality,
    orbit_systole_profile,
    verify_bounded_certificates,
    verify_clearances,
    weight_semigroup,
)

__version__ = "0.1.0"
