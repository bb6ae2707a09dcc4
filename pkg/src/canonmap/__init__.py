"""Canonical forms of maps on quantum states.

Maps that send pure states to pure states and keep strict convex
combinations strict are, up to degenerate cases, normalized measurements
``rho -> M rho M* / Tr(M rho M*)`` (possibly precomposed with the
transpose).  On tensor products they factor into local measurements and a
permutation of the factors.  This package recovers those forms from
black-box oracles and verifies the hypotheses on samples.
"""

__version__ = "0.1.0"

from .matcore import (
    DEFAULT_TOL,
    ContractError,
    ShapeError,
    Tolerances,
    Transform,
    apply_transform,
    hermitian_eig,
    jacobi_eigh,
    norms,
    partial_trace,
    partial_transpose,
    permute_factors,
    pseudoinverse,
    reduction,
    swap,
    tensor,
    trace_distance,
)
from .states import (
    BlochVector,
    DensityMatrix,
    PureState,
    StateError,
    bloch_to_state,
    check_lemma21,
    convex_combine,
    maximally_mixed,
    random_pure,
    random_state,
    spectral_resolution,
    state_to_bloch,
)
from .maps import (
    MapError,
    MeasurementOp,
    SegmentSpec,
    StateMapOracle,
    TableMissError,
    compose,
    constant_map,
    custom_map,
    identity_map,
    local_map,
    local_measurement_map,
    measurement_map,
    segment_map,
    spectral_argmax_map,
    table_map,
)
from .classify import (
    CheckResult,
    ClassifierReport,
    Constant,
    Measurement,
    Segment,
    check_orthogonality_propagation,
    check_pure_preserving,
    check_strict_convex_preserving,
    classify_single,
)
from .multipart import (
    EntangledError,
    FactorContraction,
    LocalConstant,
    LocalMeasurement,
    ProductPureState,
    SegmentPair,
    check_product_preservation,
    classify_bipartite,
    classify_multipartite,
    product_decompose_pure,
)
