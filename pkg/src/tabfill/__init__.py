"""tabfill: missing-value imputation for mixed-type tabular data.

Pipeline: preprocessing (token normalization, majority-rule column typing,
label encoding, cheap dense fill), adaptive matrix factorization (NMF or
truncated SVD), per-column gradient-boosted prediction with seeded
ensembles, and iterative refinement. A benchmark harness reproduces the
mask/impute/score protocol with mean and KNN baselines.
"""

from .bench import (
    BenchReport,
    MaskSpec,
    baseline_impute,
    categorical_accuracy,
    mask_random,
    rmse,
    run_benchmark,
)
from .boost import (
    BoostModel,
    BoostParams,
    default_params,
    fit_classifier,
    fit_regressor,
    predict,
    search_params,
)
from .engine import (
    ColumnPlan,
    ImputeConfig,
    ImputeState,
    RunReport,
    gate_search,
    impute_column,
    impute_table,
    iteration_delta,
    run_pass,
)
from .factorize import (
    FactorizationOutput,
    NmfFactors,
    SvdFactors,
    adaptive_factorize,
    choose_rank,
    nmf,
    truncated_svd,
)
from .preprocess import (
    ColumnMean,
    ImputationWarning,
    Knn,
    MixType,
    PreprocessedTriple,
    classify_columns,
    knn_impute,
    normalize_missing_tokens,
    pre_impute,
    preprocess_table,
    zeros_to_missing,
)
from .table import (
    Cell,
    ColumnKind,
    ColumnProfile,
    LabelMap,
    Table,
    decode_labels,
    encode_labels,
    parse_csv,
    profile_column,
    write_csv,
)

__version__ = "0.1.0"
