"""Metric cores, foldings, and quasiconvexity experiments in hyperbolic
groups, with exact oracles in the free-group case."""

from .cayley import (
    CayleyBall,
    GroupGeometry,
    QiEstimate,
    ball,
    estimate_delta,
    geometry,
    gromov_product,
    is_local_quasigeodesic,
    quasigeodesic_constants,
)
from .chains import ChainRecord, ReduceResult, hnn_chain, reduce_chain, run_chain_free, verify_strict
from .coremaps import (
    CoreMap,
    MapMeasurement,
    build_core_map,
    images_close,
    map_is_surjective,
    measure_map_qi,
    predicted_constants,
    size_bound_check,
)
from .cores import (
    ConstantLedger,
    CoreEdge,
    EdgeSplit,
    FoldMove,
    MetricCore,
    MoveLog,
    apply_move,
    attach_basepoint,
    check_minimal_edge_shortest,
    core_from_generators,
    enumerate_small_cores,
    fold_to_minimal,
    max_edges,
    measure_morse_bound,
    measure_qi,
    search_improvement,
    size,
    split_at_edge,
    subdivide,
    trim_to_hull,
    universal_cover_ball,
)
from .displacement import (
    EnumerationReport,
    GeneratingTuple,
    displacement_bound_check,
    enumerate_bounded,
    spanning_tree_basis,
    tau,
)
from .errors import (
    BackendCannotDecide,
    BudgetExceeded,
    CorefoldError,
    Disconnected,
    DistanceUnknown,
    EmptyRelators,
    InvalidPresentation,
    MoveInvalid,
    NotBased,
    NotFolded,
    NotNested,
    NotSubgroup,
    NotSurjective,
    RadiusInsufficient,
    StableLetterInInput,
    TrivialGenerator,
    UnknownGenerator,
    ValidationError,
)
from .stallings import (
    CoreMorphism,
    StallingsGraph,
    core_morphism,
    express_in_generators,
    fold,
    from_generators,
    is_surjective,
    membership,
    rank,
    subgroup_graph,
    subgroup_key,
)
from .words import (
    Endomorphism,
    Letter,
    Presentation,
    Word,
    apply_endomorphism,
    check_small_cancellation,
    free_presentation,
    free_reduce,
    grid_presentation,
    hnn_example_presentation,
    load_presentation,
    normal_form,
    parse_presentation,
    surface_presentation,
    word,
)

__version__ = "0.1.0"
