"""Structured representation learning over frozen claim embeddings."""

from ._core import (
    Corpus,
    FoldRun,
    FoldSplit,
    InputError,
    NumericalError,
    TrainingConfig,
    calinski_harabasz,
    cluster_labels,
    contrastive_loss,
    contrastive_pairs,
    difficulty_ratios,
    gate,
    generate_synthetic,
    load_corpus,
    make_folds,
    make_full_split,
    ordinal_loss,
    ordinal_pairs,
    run_cli,
    run_fold,
    seen_unseen_report,
    separation_ratio,
    silhouette,
    softplus,
    softplus_inverse,
    transition,
    tuple_f1,
)

__version__ = "0.1.0"
