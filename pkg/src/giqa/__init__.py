"""giqa: per-image quality scores for generated images.

Scorers: a Gaussian-mixture density of real-image features, an exact
K-nearest-neighbor density, and iteration-supervised multi-head binary
classifiers.  On top of the per-image scores sit set-level quality and
diversity metrics, preference-pair evaluation, quality-ranked image
picking, and hard-example loss weights.
"""

__version__ = "0.1.0"

from .errors import DataError, ExactMatchError, GiqaError, NumericalError
from .features import (
    FeatureMatrix,
    IterationTag,
    PcaModel,
    apply_pca,
    fit_pca,
    load_pca,
    read_features,
    save_pca,
    split_train_val,
    write_features,
)
from .gmm import (
    EmConfig,
    GmmModel,
    component_log_density,
    fit_gmm,
    gmm_log_density,
    load_gmm,
    save_gmm,
    score_gmm,
)
from .knn import KnnIndex, build_index, knn_density, score_knn
from .mbc import (
    LabeledFeature,
    MbcModel,
    MbcTrainConfig,
    binarize_labels,
    pseudo_label,
    score_mbc,
    train_mbc,
)
from .metrics import (
    PairDataset,
    ScoreTable,
    diversity_score,
    normalize_scores,
    normalize_union,
    pair_accuracy,
    quality_score,
    score_histogram,
)
from .picker import OhemConfig, ohem_weight, ohem_weights, pick_top, rank_by_score
