"""Venn prediction on learned distance metrics.

Train a twin network with contrastive loss, group examples into taxonomy
categories in the embedding space, and turn held-out calibration counts
into per-class probability intervals with guaranteed width 1/(N+1).
"""

from ivenn.data import Dataset, SplitSpec, load_csv, save_csv, split, synth_gaussians
from ivenn.ivp import (
    CalibrationTable,
    IvpPrediction,
    calibrate,
    intervals,
    load_table,
    predict,
    save_table,
)
from ivenn.metrics import (
    CalibrationReport,
    CumulativeCurves,
    EvalRecord,
    accuracy,
    brier,
    build_report,
    cumulative,
    diameter,
    ece_mce,
    nll,
)
from ivenn.mlp import (
    MlpParams,
    PairExample,
    TrainConfig,
    contrastive_loss,
    forward,
    forward_batch,
    init_params,
    load_params,
    loss_gradient,
    save_params,
    train_classifier,
    train_siamese,
)
from ivenn.pipeline import PipelineError, RunConfig, parse_config, run_pipeline
from ivenn.space import (
    CentroidSet,
    KdIndex,
    build_centroids,
    build_index,
    distance,
    knn,
    nearest_centroid,
    silhouette,
)
from ivenn.taxonomy import (
    Taxonomy,
    TaxonomyConfig,
    TaxonomyKind,
    category_count,
    fit_taxonomy,
    resolve_theta,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationReport",
    "CalibrationTable",
    "CentroidSet",
    "CumulativeCurves",
    "Dataset",
    "EvalRecord",
    "IvpPrediction",
    "KdIndex",
    "MlpParams",
    "PairExample",
    "PipelineError",
    "RunConfig",
    "SplitSpec",
    "Taxonomy",
    "TaxonomyConfig",
    "TaxonomyKind",
    "TrainConfig",
    "accuracy",
    "brier",
    "build_centroids",
    "build_index",
    "build_report",
    "calibrate",
    "category_count",
    "contrastive_loss",
    "cumulative",
    "diameter",
    "distance",
    "ece_mce",
    "fit_taxonomy",
    "forward",
    "forward_batch",
    "init_params",
    "intervals",
    "knn",
    "load_csv",
    "load_params",
    "load_table",
    "loss_gradient",
    "nearest_centroid",
    "nll",
    "parse_config",
    "predict",
    "resolve_theta",
    "run_pipeline",
    "save_csv",
    "save_params",
    "save_table",
    "silhouette",
    "split",
    "synth_gaussians",
    "train_classifier",
    "train_siamese",
    "__version__",
]
