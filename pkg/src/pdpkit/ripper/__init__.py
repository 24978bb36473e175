"""Ordered rule-set learner (grow/prune induction with MDL stopping)."""

from .learner import (
    NoPositivesError,
    TrainConfig,
    description_length,
    fit_matrix,
    foil_gain,
    grow_rule,
    learn_class_rules,
    optimize,
    prune_rule,
    prune_value,
    rule_set_length,
    train,
)
from .matrix import Matrix, compile_dataset
from .rules import (
    Condition,
    Prediction,
    Rule,
    RuleSet,
    SchemaMismatchError,
    parse_rules_text,
    predict,
    predict_dataset,
)

__all__ = [
    "Condition", "Matrix", "NoPositivesError", "Prediction", "Rule", "RuleSet", "SchemaMismatchError",
    "TrainConfig", "compile_dataset", "description_length", "fit_matrix", "foil_gain", "grow_rule",
    "learn_class_rules", "optimize", "parse_rules_text", "predict", "predict_dataset", "prune_rule",
    "prune_value", "rule_set_length", "train",
]
