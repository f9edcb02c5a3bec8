"""Numerical toolkit for zero-product and product-at-a-point questions on
finite direct sums of full matrix algebras M_n1 (+) ... (+) M_nk."""
from .algebra import (
    AlgebraElement,
    AlgebraShape,
    RankProfile,
    ShapeMismatch,
    rank_profile,
    random_element,
    random_with_ranks,
    rng_for,
    satisfies_rank_hypothesis,
)
from .bilinear import (
    BilinearMap,
    DeterminednessReport,
    FiberSample,
    balanced_identity_check,
    costara_counterexample,
    costara_witness,
    determinedness_rank,
    factor_through_multiplication,
    has_product_property_at,
    sample_fiber,
    transpose_counterexample,
    transpose_witness,
    vanishes_on_zero_products,
    zero_product_span_rank,
)
from .factorization import (
    FactorizationWitness,
    GeneralizedWitness,
    RankHypothesisViolated,
    factorize_through,
    generalized_factorize,
    verify_witness,
    zero_fiber_generators,
)
from .maps import (
    DerivationReport,
    HomExtractionReport,
    LinearMapMatrix,
    derivation_at_c_check,
    derivation_decompose,
    extract_homomorphism,
    pair_identity_check,
    pair_preserves_zero_products,
    weighted_hom_decompose,
)
from .rank import (
    MinPiDecomposition,
    RankOneOperator,
    minpi_decompose,
    odd_cube_root,
    peirce_decompose,
    support_projections,
    zp_decompose_pair,
)

__version__ = "0.1.0"
