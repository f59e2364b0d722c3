"""ELMV: ensemble learning for tabular data with substantial missing values.

Stage 1 extracts low-missingness maximal subsets with a greedy dynamic
program, stage 2 trains a boosted-tree model per subset and picks models per
query with a support set, stage 3 ranks critical features.
"""

from .data import (
    MissingnessMask,
    MissingnessReport,
    ObservationTable,
    TableParseError,
    TemporalObservationTable,
    assess,
    build_mask,
    collapse_temporal,
    load_iris,
    load_table,
    write_table,
)
from .ensemble import (
    EnsemblePredictor,
    ModelRecord,
    SelectionConfig,
    SimilarityWeights,
    SupportSet,
    build_support_set,
    knn_baseline,
    similarity,
)
from .features import GlobalFeatureRanking, LocalFeatureReport, local_report, rank_features
from .learner import (
    BoostedModel,
    LearnerParams,
    TrainingError,
    cross_validate,
    feature_importance,
    mean_impute,
    predict,
    train,
)
from .metrics import EvalMetrics, classification_metrics
from .pipeline import ELMV, ELMVConfig
from .subsets import (
    MissingCountTable,
    NoQualifiedSubsetsError,
    QualifiedSubsetCollection,
    SubsetDescriptor,
    brute_force_min,
    filter_qualified,
    generate_table,
)

__version__ = "0.1.0"
