"""Cascade decision-tree toolkit for multi-label ICD-10 diagnosis coding.

A two-stage multi-label classifier (binary-relevance C4.5 banks with a
validity-registry trigger), the code-hierarchy and registry model it
relies on, table-style evaluation metrics, and a reproducible CLI.
"""

__version__ = "0.1.0"

from .cascade import (
    BRModel,
    CascadeTrace,
    ChiDTModel,
    LPModel,
    model_from_dict,
    model_to_dict,
    predict_br,
    predict_chidt,
    train_br,
    train_chidt,
    train_label_powerset,
    trigger_rate,
)
from .data import (
    AttributeMeta,
    Dataset,
    GeneratorConfig,
    GeneratorProfile,
    Record,
    SplitSpec,
    cover_all_labels_split,
    export_arff,
    export_csv,
    generate_synthetic,
    load_arff_subset,
    load_csv,
)
from .errors import SchemaMismatchError, ValidationError
from .evaluation import (
    ConfusionMatrix,
    EvalResult,
    KFoldResult,
    MetricsReport,
    MultiLabelReport,
    accuracy,
    evaluate_holdout,
    evaluate_kfold,
    evaluate_predictions,
    evaluate_resubstitution,
    format_report,
    kappa,
    kfold_assignments,
    probabilistic_errors,
)
from .ontology import (
    CodeHierarchy,
    CodeNode,
    ExclusionGroup,
    TermLexicon,
    ValidCombinationRegistry,
    ancestors,
    combo_key,
    declared_registry,
    is_valid,
    load_exclusions,
    load_hierarchy,
    map_terms,
    normalize_term,
    observed_registry,
)
from .tree import (
    C45Params,
    C45Tree,
    SplitTest,
    TreeNode,
    best_numeric_threshold,
    build_tree,
    entropy,
    gain_ratio,
    grow,
    predict,
    predict_distribution,
    prune_ebp,
)

__all__ = [
    "AttributeMeta",
    "BRModel",
    "C45Params",
    "C45Tree",
    "CascadeTrace",
    "ChiDTModel",
    "CodeHierarchy",
    "CodeNode",
    "ConfusionMatrix",
    "Dataset",
    "EvalResult",
    "ExclusionGroup",
    "GeneratorConfig",
    "GeneratorProfile",
    "KFoldResult",
    "LPModel",
    "MetricsReport",
    "MultiLabelReport",
    "Record",
    "SchemaMismatchError",
    "SplitSpec",
    "SplitTest",
    "TermLexicon",
    "TreeNode",
    "ValidCombinationRegistry",
    "ValidationError",
    "accuracy",
    "ancestors",
    "best_numeric_threshold",
    "build_tree",
    "combo_key",
    "cover_all_labels_split",
    "declared_registry",
    "entropy",
    "evaluate_holdout",
    "evaluate_kfold",
    "evaluate_predictions",
    "evaluate_resubstitution",
    "export_arff",
    "export_csv",
    "format_report",
    "gain_ratio",
    "generate_synthetic",
    "grow",
    "is_valid",
    "kappa",
    "kfold_assignments",
    "load_arff_subset",
    "load_csv",
    "load_exclusions",
    "load_hierarchy",
    "map_terms",
    "model_from_dict",
    "model_to_dict",
    "normalize_term",
    "observed_registry",
    "predict",
    "predict_br",
    "predict_chidt",
    "predict_distribution",
    "probabilistic_errors",
    "prune_ebp",
    "train_br",
    "train_chidt",
    "train_label_powerset",
    "trigger_rate",
]
