"""Redundancy-aware batch active-learning selection."""

from .featgeom import (
    DistanceEngine,
    FeatureMap,
    RoiRect,
    combined_distance,
    d_max,
    distance,
    elem_distance,
    image_feature_from_map,
    object_distance,
    plain_distance,
    roi_gap,
    roi_to_feature_coords,
)
from .pool import (
    BoundingBox,
    DegeneratePoolError,
    DistanceConfig,
    InvalidInputError,
    NorisError,
    ObjectInstance,
    Pool,
    Sample,
    Selected,
    SelectionConfig,
    SelectionResult,
    SimilarityConfig,
    TooLargeError,
    validate_pool,
)
from .selector import (
    MatrixSimilarity,
    PoolSimilarity,
    brute_force_optimum,
    build_similarity,
    hybrid_product,
    k_center_greedy,
    least_confidence,
    noris_max_select,
    noris_sum_select,
    objective_max,
    objective_sum,
    random_select,
    select,
    top_b_uncertainty,
)
from .simcore import (
    LossBoundCase,
    gaussian_lambda_from_linear,
    kernel_integral_gap,
    loss_bound,
    resolve_lambda,
    similarity,
    update_score,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "DegeneratePoolError",
    "DistanceConfig",
    "DistanceEngine",
    "FeatureMap",
    "InvalidInputError",
    "LossBoundCase",
    "MatrixSimilarity",
    "NorisError",
    "ObjectInstance",
    "Pool",
    "PoolSimilarity",
    "RoiRect",
    "Sample",
    "Selected",
    "SelectionConfig",
    "SelectionResult",
    "SimilarityConfig",
    "TooLargeError",
    "brute_force_optimum",
    "build_similarity",
    "combined_distance",
    "d_max",
    "distance",
    "elem_distance",
    "gaussian_lambda_from_linear",
    "hybrid_product",
    "image_feature_from_map",
    "k_center_greedy",
    "kernel_integral_gap",
    "least_confidence",
    "loss_bound",
    "noris_max_select",
    "noris_sum_select",
    "object_distance",
    "objective_max",
    "objective_sum",
    "plain_distance",
    "random_select",
    "resolve_lambda",
    "roi_gap",
    "roi_to_feature_coords",
    "select",
    "similarity",
    "top_b_uncertainty",
    "update_score",
    "validate_pool",
]
