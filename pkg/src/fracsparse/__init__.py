"""Sparse domination toolkit for fractional singular operators on dyadic grids."""

from .errors import (
    DegenerateWeightError,
    EllipticityError,
    EmptySampleError,
    FormatError,
    FracsparseError,
    LeafError,
    ParameterError,
    SpectrumError,
    SupportError,
)
from .grid import (
    Cube,
    DyadicLattice,
    GridDomain,
    GridFunction,
    all_cubes,
    annulus,
    average,
    base_cube,
    base_cubes,
    base_lattice,
    default_lattices,
    dyadic_children,
    house_triple,
    make_domain,
    oscillation,
    three_lattices,
    weighted_average,
)
from .operators import (
    OperatorMeta,
    OperatorRep,
    QuadratureRule,
    SpectralData,
    approx_identity_apply,
    approx_identity_coeffs,
    band_integral_scalar,
    commutator_apply,
    divergence_form,
    fractional_power,
    fractional_power_oracle,
    heat_band_apply,
    heat_band_integral,
    identity_operator,
    make_quadrature_rule,
    offdiag_profile,
    read_matrix_file,
    riesz_normalization,
    riesz_potential,
    semigroup_apply,
    spectral_data,
    write_matrix_file,
    zero_operator,
)
from .maximal import (
    LevelWindows,
    WeakBoundProfile,
    fractional_maximal,
    grand_truncation,
    level_windows,
    maximal,
    maximal_on_cube,
    sharp_grand_truncation,
    smoothed_fractional_maximal,
    truncation_stats_on_cube,
    weak_bound_profile,
    weak_quasi_norm,
    weighted_maximal,
)
from .weights import (
    Weight,
    WeightConstants,
    ainf_constant,
    ap_constant,
    apq_constant,
    as_weight,
    bloom_weight,
    bmo_nu,
    default_cube_collection,
    describe_cube_collection,
    make_weight,
    power_weight,
    rh_constant,
    two_weight_constant,
)
from .sparse import (
    DominationReport,
    SelectionStats,
    SparseFamily,
    SparsenessReport,
    StoppingFamily,
    TestingReport,
    center_split_averages,
    construct_sparse,
    cov_norm_rhs,
    iterated_sparse_avg,
    read_family_file,
    rehouse_family,
    sparse_form,
    sparse_operator,
    sparse_selection,
    sparse_sum_bound,
    stopping_family,
    testing_norms,
    verify_sparseness,
    write_family_file,
)
from .bounds import (
    BloomConstants,
    ClassicalExponents,
    DeltaWindow,
    ExponentProfile,
    FractionalBound,
    bloom_commutator_constants,
    classical_exponents,
    delta_feasible,
    fractional_two_weight_bound,
    one_weight_commutator_bound,
    one_weight_fractional_bound,
    sparse_operator_bound,
    two_weight_form_bound,
)
from .harness import (
    BoundReport,
    CellNorm,
    ConstantEstimate,
    DominationSummary,
    ExperimentConfig,
    FracpowReport,
    Row,
    SparseBilinearForm,
    WeakTypeReport,
    config_from_mapping,
    emit_report,
    estimate_best_constant,
    load_config,
    read_report_csv,
    run_bloom_experiment,
    run_domination_experiment,
    run_fracpow_experiment,
    run_two_weight_experiment,
    run_verification_suite,
    run_weak_type_experiment,
    run_weight_survey,
    substream,
)

__version__ = "0.1.0"
