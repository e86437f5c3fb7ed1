"""Batch-effect-aware QC classification toolkit.

Thin python surface over the C++ core: synthetic multi-site data generation,
site-wise robust normalization, the ft_sites/ft_noise feature filters, the
random-forest / extra-trees ensemble, nested cross-validation with grid
search, and the batch-effect diagnostics (repeated K-means scores, Youden
thresholds, pairwise Wasserstein distances).

Configs are passed as JSON strings; unknown keys are rejected.
"""

from ._core import (
    ConfigError,
    DataError,
    FeatureTable,
    Forest,
    TrainedPipeline,
    TrainError,
    apply_norm,
    batch_effect_score,
    fit_forest,
    fit_norm,
    fit_single_cell,
    ft_noise,
    ft_sites,
    generate,
    homogeneity_completeness,
    kmeans,
    optimal_threshold,
    pairwise_wasserstein,
    roc_auc,
    split_per_study,
    subsample_site_preserving,
    train,
    wasserstein_1d,
)

__all__ = [
    "ConfigError",
    "DataError",
    "FeatureTable",
    "Forest",
    "TrainedPipeline",
    "TrainError",
    "apply_norm",
    "batch_effect_score",
    "fit_forest",
    "fit_norm",
    "fit_single_cell",
    "ft_noise",
    "ft_sites",
    "generate",
    "homogeneity_completeness",
    "kmeans",
    "optimal_threshold",
    "pairwise_wasserstein",
    "roc_auc",
    "split_per_study",
    "subsample_site_preserving",
    "train",
    "wasserstein_1d",
]

__version__ = "0.1.0"
