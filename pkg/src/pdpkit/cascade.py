"""Experiment pipelines: splitting, out-of-fold SLU stacking, PDP assembly and the grid."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import dialog
from .dialog import (
    BINARY_OUTCOMES,
    EX12,
    SLU_BINARY,
    SLU_CLASSES,
    WINDOWS,
    DialogueRecord,
    MissingHandLabelsError,
    WindowOptions,
    build_window,
    collapse_slu_binary,
    derive_outcome,
    derive_slu_label,
    encode_exchange,
    exchange_schema,
    window_exchanges,
    window_schema,
)
from .metrics import EvalReport, TTestResult, evaluate, paired_t
from .ripper import RuleSet, TrainConfig, compile_dataset, fit_matrix, predict_dataset, train
from .tabular import Dataset, FeatureVector, SchemaError

NONE, AUTO, HLT, ORACLE = "none", "auto", "hlt", "oracle"
SLU_MODES = (NONE, AUTO, HLT, ORACLE)
DEFAULT_TEST_FRACTION = 867 / 4692


class ModeResourceError(ValueError):
    """An SLU mode was requested without the model or labels it needs."""


@dataclass(frozen=True)
class ExperimentConfig:
    window: str = EX12
    feature_set: str = "AUTO"
    slu_mode: str = NONE
    learner: TrainConfig = TrainConfig()
    folds: int = 4
    seed: int = 0
    collapse: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "window", self.window.upper())
        object.__setattr__(self, "slu_mode", self.slu_mode.lower())
        object.__setattr__(self, "feature_set", self.feature_set.upper())
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}")
        if self.slu_mode not in SLU_MODES:
            raise ValueError(f"unknown SLU mode {self.slu_mode!r}")
        dialog.feature_set_names(self.feature_set)
        if self.folds < 2:
            raise ValueError("folds must be at least 2")

    @property
    def row(self) -> str:
        """Window-independent description, used as the table row."""
        if self.name:
            return self.name
        suffix = {NONE: "", AUTO: " + auto-SLU-success", HLT: " + hlt-SLU-success", ORACLE: " + SLU-success"}
        return self.feature_set + suffix[self.slu_mode]

    def to_json(self) -> dict[str, Any]:
        return {
            "window": self.window, "feature_set": self.feature_set, "slu_mode": self.slu_mode,
            "learner": self.learner.to_json(), "folds": self.folds, "seed": self.seed,
            "collapse": self.collapse, "name": self.row,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "ExperimentConfig":
        learner = TrainConfig(**obj["learner"]) if obj.get("learner") else TrainConfig()
        return cls(
            window=obj.get("window", EX12), feature_set=obj.get("feature_set", "AUTO"),
            slu_mode=obj.get("slu_mode", NONE), learner=learner, folds=int(obj.get("folds", 4)),
            seed=int(obj.get("seed", 0)), collapse=bool(obj.get("collapse", False)),
            name=obj.get("name", ""),
        )


def table5_grid(learner: TrainConfig = TrainConfig(), seed: int = 0, folds: int = 4) -> list[ExperimentConfig]:
    """Seven feature-set/mode rows crossed with the three windows."""
    rows = [
        ("BASELINE", NONE, "Baseline"),
        ("AUTO", NONE, "AUTO (no auto-SLU-success)"),
        ("AUTO", AUTO, "AUTO + auto-SLU-success"),
        ("TASK-INDEPT", NONE, "AUTO, TASK-INDEPT (no auto-SLU-success)"),
        ("TASK-INDEPT", AUTO, "AUTO, TASK-INDEPT + auto-SLU-success"),
        ("AUTO", ORACLE, "AUTO + SLU-success"),
        ("ALL", AUTO, "ALL (AUTO + Hand-labelled)"),
    ]
    return [ExperimentConfig(w, fs, mode, learner, folds, seed, name=name)
            for fs, mode, name in rows for w in WINDOWS]


# -- splitting ----------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[DialogueRecord, ...]
    test: tuple[DialogueRecord, ...]

    @property
    def train_exchanges(self) -> list[str]:
        return [exchange_id(d, i) for d in self.train for i in range(1, len(d.exchanges) + 1)]

    @property
    def test_exchanges(self) -> list[str]:
        return [exchange_id(d, i) for d in self.test for i in range(1, len(d.exchanges) + 1)]


def exchange_id(d: DialogueRecord, i: int) -> str:
    return f"{d.id}#{i}"


def dialogue_of(example_id: str) -> str:
    return example_id.rpartition("#")[0]


def split_corpus(corpus: Sequence[DialogueRecord], seed: int = 0,
                 test_fraction: float = DEFAULT_TEST_FRACTION) -> CorpusSplit:
    """Random dialogue-level split; both sides keep corpus order."""
    if not corpus:
        raise ValueError("cannot split an empty corpus")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n_test = int(round(len(corpus) * test_fraction))
    picked = set(np.random.default_rng(seed).permutation(len(corpus))[:n_test].tolist())
    train = tuple(d for i, d in enumerate(corpus) if i not in picked)
    test = tuple(d for i, d in enumerate(corpus) if i in picked)
    return CorpusSplit(train, test)


# -- exchange-level data ------------------------------------------------------

class ExchangeCache:
    """Per-exchange encodings computed once and shared by every dataset built from them."""

    def __init__(self, options: WindowOptions = WindowOptions()):
        self.options = options
        self._frags: dict[tuple[str, int, bool], dict[str, Any]] = {}
        self._slu: dict[str, str | None] = {}

    def fragment(self, d: DialogueRecord, i: int, hand: bool = False) -> dict[str, Any]:
        key = (d.id, i, hand)
        frag = self._frags.get(key)
        if frag is None:
            frag = encode_exchange(d, i, task_names=self.options.task_names, hand=hand)
            self._frags[key] = frag
        return frag

    def slu_label(self, d: DialogueRecord, i: int) -> str | None:
        key = exchange_id(d, i)
        if key not in self._slu:
            try:
                self._slu[key] = derive_slu_label(d.exchanges[i - 1])
            except MissingHandLabelsError:
                self._slu[key] = None
        return self._slu[key]


def exchange_dataset(dialogues: Iterable[DialogueRecord], feature_set: str = "SLU-INPUT",
                     collapse: bool = False, cache: ExchangeCache | None = None) -> Dataset:
    """One example per exchange, labelled with its SLU outcome when hand labels allow."""
    cache = cache or ExchangeCache()
    schema = exchange_schema(feature_set, collapse=collapse, options=cache.options)
    wanted = set(schema.names)
    examples = []
    for d in dialogues:
        for i in range(1, len(d.exchanges) + 1):
            frag = cache.fragment(d, i)
            label = cache.slu_label(d, i)
            if label is not None and collapse:
                label = collapse_slu_binary(label)
            examples.append(FeatureVector({k: v for k, v in frag.items() if k in wanted}, label,
                                          exchange_id(d, i)))
    return Dataset(schema, examples, validate=False)


def train_slu_predictor(exchanges: Dataset, feature_set: str = "SLU-INPUT",
                        learner: TrainConfig = TrainConfig(), collapse: bool = False) -> RuleSet:
    """Train the per-exchange SLU-outcome model (4-class, or 2-class when collapsed)."""
    if any(ex.label is None for ex in exchanges):
        raise SchemaError("every training exchange needs an SLU label")
    data = _conform(exchanges, feature_set, collapse)
    return train(data, learner)


def _conform(exchanges: Dataset, feature_set: str, collapse: bool) -> Dataset:
    schema = exchange_schema(feature_set, collapse=collapse)
    if exchanges.schema == schema:
        return exchanges
    wanted = set(schema.names)
    examples = []
    for ex in exchanges:
        label = ex.label
        if label is not None and collapse and label not in SLU_BINARY:
            label = collapse_slu_binary(label)
        examples.append(FeatureVector({k: v for k, v in ex.values.items() if k in wanted}, label, ex.id))
    return Dataset(schema, examples)


# -- stacking -----------------------------------------------------------------

@dataclass(frozen=True)
class StackedCorpus:
    values: Mapping[str, str]                 # exchange id -> out-of-fold prediction
    fold_of: Mapping[str, int]                # dialogue id -> held-out fold
    fold_train: tuple[frozenset[str], ...]    # dialogues each fold model was trained on
    model: RuleSet                            # trained on every training exchange
    feature_set: str = "SLU-INPUT"
    collapse: bool = False

    def provenance(self, example_id: str) -> tuple[int, frozenset[str]]:
        k = self.fold_of[dialogue_of(example_id)]
        return k, self.fold_train[k]

    def audit(self, example_ids: Iterable[str] | None = None) -> list[str]:
        """Exchange ids whose stacked value came from a model that saw their dialogue."""
        ids = self.values.keys() if example_ids is None else example_ids
        bad = []
        for ex_id in ids:
            if ex_id not in self.values:
                bad.append(ex_id)
                continue
            _, trained_on = self.provenance(ex_id)
            if dialogue_of(ex_id) in trained_on:
                bad.append(ex_id)
        return bad

    def to_json(self) -> dict[str, Any]:
        return {
            "format": "pdpkit.stacked/1",
            "values": dict(sorted(self.values.items())),
            "fold_of": dict(sorted(self.fold_of.items())),
            "fold_train": [sorted(s) for s in self.fold_train],
            "model": self.model.to_record(),
            "feature_set": self.feature_set,
            "collapse": self.collapse,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "StackedCorpus":
        if obj.get("format") != "pdpkit.stacked/1":
            raise ValueError("not a stacked-corpus record")
        return cls(dict(obj["values"]), {k: int(v) for k, v in obj["fold_of"].items()},
                   tuple(frozenset(s) for s in obj["fold_train"]), RuleSet.from_record(obj["model"]),
                   obj.get("feature_set", "SLU-INPUT"), bool(obj.get("collapse", False)))


def jackknife_stack(train_exchanges: Dataset, learner: TrainConfig = TrainConfig(), folds: int = 4,
                    seed: int = 0, feature_set: str = "SLU-INPUT", collapse: bool = False) -> StackedCorpus:
    """Out-of-fold SLU predictions for every training exchange, folds split by dialogue."""
    if folds < 2:
        raise ValueError("folds must be at least 2")
    data = _conform(train_exchanges, feature_set, collapse)
    if any(ex.label is None for ex in data):
        raise SchemaError("stacking needs SLU labels on every training exchange")
    dids = list(dict.fromkeys(dialogue_of(ex.id) for ex in data))
    if folds > len(dids):
        raise ValueError(f"{folds} folds exceed {len(dids)} dialogues")
    order = np.random.default_rng(seed).permutation(len(dids))
    fold_of = {dids[j]: rank % folds for rank, j in enumerate(order)}
    ex_fold = np.array([fold_of[dialogue_of(ex.id)] for ex in data], dtype=np.int64)
    mx = compile_dataset(data)
    values: dict[str, str] = {}
    fold_train = []
    for k in range(folds):
        held = ex_fold == k
        fold_train.append(frozenset(d for d, f in fold_of.items() if f != k))
        model = fit_matrix(mx, ~held, learner)
        preds = predict_dataset(model, data, matrix=mx)
        for j in np.flatnonzero(held):
            values[data[j].id] = preds[j].label
    full = fit_matrix(mx, None, learner)
    return StackedCorpus(values, fold_of, tuple(fold_train), full, feature_set, collapse)


# -- PDP datasets -------------------------------------------------------------

def _hand_slu(d: DialogueRecord, i: int, collapse: bool, cache: ExchangeCache) -> str:
    label = cache.slu_label(d, i)
    if label is None:
        raise ModeResourceError(f"dialogue {d.id} lacks hand labels required by this SLU mode")
    return collapse_slu_binary(label) if collapse else label


def predict_exchanges(model: RuleSet, dialogues: Sequence[DialogueRecord], feature_set: str = "SLU-INPUT",
                      collapse: bool = False, cache: ExchangeCache | None = None) -> dict[str, str]:
    data = exchange_dataset(dialogues, feature_set, collapse, cache)
    preds = predict_dataset(model, data)
    return {ex.id: p.label for ex, p in zip(data, preds)}


def assemble_pdp_dataset(dialogues: Sequence[DialogueRecord], config: ExperimentConfig,
                         stacked: StackedCorpus | None = None, side: str = "train",
                         max_exchanges: int | None = None, cache: ExchangeCache | None = None,
                         predictions: Mapping[str, str] | None = None) -> Dataset:
    """Dialogue-level vectors for one window and feature set, with SLU-success injected per mode.

    ``side`` selects which source the AUTO and HLT modes use: stacked values or hand labels
    on the training side, full-model predictions on the test side.
    """
    if side not in ("train", "test"):
        raise ValueError("side must be 'train' or 'test'")
    cache = cache or ExchangeCache()
    mode = config.slu_mode
    if mode in (AUTO, HLT) and stacked is None:
        raise ModeResourceError(f"SLU mode {mode!r} needs a stacked SLU model")
    if mode in (HLT, ORACLE) and not all(d.has_hand_labels for d in dialogues) and (mode == ORACLE or side == "train"):
        raise ModeResourceError(f"SLU mode {mode!r} needs hand labels on the {side} side")
    if max_exchanges is None:
        max_exchanges = max(len(d.exchanges) for d in dialogues)
    collapse = stacked.collapse if stacked is not None else config.collapse
    vocab = SLU_BINARY if collapse else SLU_CLASSES
    schema = window_schema(config.window, config.feature_set, max_exchanges,
                           inject=None if mode == NONE else vocab, options=cache.options)
    need_model = (mode == AUTO and side == "test") or (mode == HLT and side == "test")
    if need_model and predictions is None:
        predictions = predict_exchanges(stacked.model, dialogues, stacked.feature_set, collapse, cache)
    examples = []
    for d in dialogues:
        x = build_window(d, config.window, config.feature_set, cache.options, cache.fragment)
        if mode != NONE:
            values = dict(x.values)
            for i in range(1, window_exchanges(d, config.window) + 1):
                ex_id = exchange_id(d, i)
                if mode == ORACLE or (mode == HLT and side == "train"):
                    v = _hand_slu(d, i, collapse, cache)
                elif need_model:
                    v = predictions[ex_id]
                else:
                    if ex_id not in stacked.values:
                        raise ModeResourceError(f"no stacked value for exchange {ex_id}")
                    v = stacked.values[ex_id]
                values[f"e{i}-{dialog.AUTO_SLU}"] = v
            x = FeatureVector(values, x.label, x.id)
        examples.append(x)
    return Dataset(schema, examples, BINARY_OUTCOMES, validate=False)


# -- experiments --------------------------------------------------------------

@dataclass
class ExperimentRun:
    split: CorpusSplit
    reports: list[EvalReport]
    stacked: dict[tuple, StackedCorpus] = field(default_factory=dict)
    models: list[RuleSet] = field(default_factory=list)


def run_grid(corpus: Sequence[DialogueRecord], grid: Sequence[ExperimentConfig], seed: int = 0,
             reference: int | None = 0, split: CorpusSplit | None = None,
             options: WindowOptions = WindowOptions()) -> ExperimentRun:
    """Run every config on one shared split; returns reports plus the intermediate artefacts."""
    if not grid:
        return ExperimentRun(split or split_corpus(corpus, seed), [])
    split = split or split_corpus(corpus, seed)
    cache = ExchangeCache(options)
    max_ex = max(len(d.exchanges) for d in corpus)
    stacks: dict[tuple, StackedCorpus] = {}
    test_preds: dict[tuple, dict[str, str]] = {}
    train_ex: dict[bool, Dataset] = {}
    reports, models = [], []
    for cfg in grid:
        stacked = preds = None
        if cfg.slu_mode in (AUTO, HLT):
            key = (json.dumps(cfg.learner.to_json(), sort_keys=True), cfg.folds, cfg.seed, cfg.collapse)
            if key not in stacks:
                if cfg.collapse not in train_ex:
                    train_ex[cfg.collapse] = exchange_dataset(split.train, collapse=cfg.collapse, cache=cache)
                stacks[key] = jackknife_stack(train_ex[cfg.collapse], cfg.learner, cfg.folds, cfg.seed,
                                              collapse=cfg.collapse)
                test_preds[key] = predict_exchanges(stacks[key].model, split.test, collapse=cfg.collapse,
                                                    cache=cache)
            stacked, preds = stacks[key], test_preds[key]
        tr = assemble_pdp_dataset(split.train, cfg, stacked, "train", max_ex, cache)
        te = assemble_pdp_dataset(split.test, cfg, stacked, "test", max_ex, cache, preds)
        model = train(tr, cfg.learner)
        predicted = [p.label for p in predict_dataset(model, te)]
        base_cls = model.default if not model.rules else _majority(tr)
        reports.append(evaluate(te.labels, predicted, BINARY_OUTCOMES, cfg.to_json(), base_cls,
                                [x.id for x in te]))
        models.append(model)
    if reference is not None:
        ref = reports[reference]
        reports = [
            r if i == reference else r.with_ttests([TTestResult(ref.name, *paired_t(r.correct, ref.correct))])
            for i, r in enumerate(reports)
        ]
    return ExperimentRun(split, reports, stacks, models)


def _majority(data: Dataset) -> str:
    labels = [ex.label for ex in data if ex.label is not None]
    counts = {c: labels.count(c) for c in data.classes}
    return max(data.classes, key=lambda c: (counts[c], -data.classes.index(c)))


def run_experiment(corpus: Sequence[DialogueRecord], grid: Sequence[ExperimentConfig], seed: int = 0,
                   reference: int | None = 0, split: CorpusSplit | None = None) -> list[EvalReport]:
    return run_grid(corpus, grid, seed, reference, split).reports


def balanced_subsample(split: CorpusSplit | tuple[Sequence[DialogueRecord], Sequence[DialogueRecord]],
                       classes: tuple[str, str], seed: int = 0) -> tuple[list[DialogueRecord], list[DialogueRecord]]:
    """Keep two raw outcome classes and subsample the larger to the smaller, per side."""
    train_side, test_side = (split.train, split.test) if isinstance(split, CorpusSplit) else split
    rng = np.random.default_rng(seed)
    out = []
    for side in (train_side, test_side):
        groups = {c: [d for d in side if derive_outcome(d).raw == c] for c in classes}
        for c, members in groups.items():
            if not members:
                raise ValueError(f"class {c!r} absent from a split side")
        k = min(len(m) for m in groups.values())
        keep = set()
        for c in classes:
            members = groups[c]
            picked = rng.choice(len(members), size=k, replace=False)
            keep.update(members[j].id for j in picked)
        out.append([d for d in side if d.id in keep])
    return out[0], out[1]


def config_digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]
