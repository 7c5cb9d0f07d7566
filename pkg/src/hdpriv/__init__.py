"""Heterogeneous differential privacy via the stretching mechanism.

Per-item privacy weights, the stretched Laplace estimator, brute-force
sensitivity oracles, and a gossip clustering simulator for measuring utility.
"""

from hdpriv.dp_core import (
    NOISELESS,
    InvalidParameterError,
    LaplaceScale,
    MechanismOutput,
    PrivacyBudget,
    Sensitivity,
    derive_rng,
    laplace_sample,
    laplacian_mechanism,
)
from hdpriv.mechanism import (
    PrivacyVector,
    QuerySpec,
    ShrinkageMatrix,
    StretchSpec,
    build_stretch_spec,
    distortion_bound,
    hdp_estimate,
    scalar_product_query,
    solve_shrink_weight,
    stretch_profile,
    weighted_sum_query,
)
from hdpriv.similarity import (
    Profile,
    WeightedProfile,
    cosine_exact,
    hdp_cosine,
    hdp_scalar_product,
)

__version__ = "0.1.0"

__all__ = [
    "NOISELESS",
    "InvalidParameterError",
    "LaplaceScale",
    "MechanismOutput",
    "PrivacyBudget",
    "PrivacyVector",
    "Profile",
    "QuerySpec",
    "Sensitivity",
    "ShrinkageMatrix",
    "StretchSpec",
    "WeightedProfile",
    "build_stretch_spec",
    "cosine_exact",
    "derive_rng",
    "distortion_bound",
    "hdp_cosine",
    "hdp_estimate",
    "hdp_scalar_product",
    "laplace_sample",
    "laplacian_mechanism",
    "scalar_product_query",
    "solve_shrink_weight",
    "stretch_profile",
    "weighted_sum_query",
]
