"""qfals: falsification tests for finite-dimensional quantum theory.

States, effects and trace-non-increasing operations with Kraus/Choi
round trips; purification and Stinespring dilation; Haar twirls,
average-state witnesses and an alternating-projection falsifier search;
a small circuit language and a reporting CLI.
"""

from .linalg import (
    DEFAULT_TOL,
    DimensionMismatch,
    LinalgError,
    NotHermitian,
    NotPositiveSemidefinite,
    Subspace,
    double_ket,
    eig_hermitian,
    haar_isometry,
    haar_unitary,
    kron,
    partial_trace,
    permute_factors,
    random_density,
    random_pure,
    sqrt_psd,
    support_projector,
    unvec_double_ket,
)
from .ops import (
    Effect,
    Instrument,
    QuantumOperation,
    State,
    System,
    TRIVIAL,
    apply,
    born_probability,
    choi_to_kraus,
    compose_par,
    compose_seq,
    depolarizing_channel,
    identity_channel,
    is_atomic,
    is_deterministic_effect,
    is_deterministic_operation,
    is_deterministic_state,
    kraus_to_choi,
    probability_of_effect,
    projective_instrument,
    random_instrument,
    tensor_system,
    total_channel,
    unitary_channel,
    validate_effect,
    validate_instrument,
    validate_operation,
    validate_state,
)
from .dilation import (
    DilationResult,
    PurificationResult,
    canonical_phase,
    complete_isometry,
    instrument_from_dilation,
    isometry_from_max_entangled,
    max_entangled_from_isometry,
    purify,
    stinespring_dilate,
)
from .falsification import (
    AtomicTransformationFamily,
    FalsificationTest,
    HypothesisFamily,
    IsometricTransformationFamily,
    MarginalOfPureFamily,
    MaxEntangledFamily,
    NCopyPurityFamily,
    PurityFamily,
    SearchResult,
    StateSupportFamily,
    TrialCounts,
    WitnessVerdict,
    coarse_grain,
    falsification_chance,
    falsifier_search,
    family_average,
    modus_tollens_transfer,
    simulate_trials,
    support_falsifier,
    symmetric_subspace_projector,
    twirl_analytic,
    twirl_monte_carlo,
    witness_unfalsifiable,
)

__version__ = "0.1.0"
