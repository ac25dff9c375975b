"""Python surface of the attack-comment pipeline core."""

from ._core import (
    AttackModel,
    ToxpipeError,
    Vocabulary,
    aggregate_labels,
    attack_scores,
    auc,
    bootstrap_ci,
    build_vocab,
    diff_added_text,
    equal_error_threshold,
    krippendorff_alpha,
    load_model,
    save_model,
    spearman,
    strip_markup,
    train_classifier,
)
from ._core import __version__

__all__ = [
    "AttackModel",
    "ToxpipeError",
    "Vocabulary",
    "aggregate_labels",
    "attack_scores",
    "auc",
    "bootstrap_ci",
    "build_vocab",
    "diff_added_text",
    "equal_error_threshold",
    "krippendorff_alpha",
    "load_model",
    "save_model",
    "spearman",
    "strip_markup",
    "train_classifier",
    "__version__",
]
