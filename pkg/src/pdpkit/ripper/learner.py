"""RIPPER-style rule induction.

Rules are grown greedily with FOIL information gain, pruned by reduced error
on a held-out split, and accumulated until a description-length bound or an
error-rate bound trips. An optimization pass then reconsiders each rule
against a fresh replacement and a revision. Classes are learned in order of
increasing frequency; the most frequent class becomes the default.
"""

from __future__ import annotations

import dataclasses
import math
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..tabular import Dataset, SchemaError
from .matrix import Matrix, compile_dataset
from .rules import Condition, Rule, RuleSet


@dataclass(frozen=True)
class TrainConfig:
    grow_fraction: float = 2 / 3
    mdl_slack_bits: float = 64.0
    optimization_passes: int = 2
    loss_ratio: float = 1.0
    seed: int = 0
    min_rule_cover: int = 1

    def __post_init__(self):
        if not 0.0 < self.grow_fraction < 1.0:
            raise ValueError("grow_fraction must lie in (0, 1)")
        if self.mdl_slack_bits < 0:
            raise ValueError("mdl_slack_bits must be non-negative")
        if self.optimization_passes < 0:
            raise ValueError("optimization_passes must be >= 0")
        if not self.loss_ratio > 0:
            raise ValueError("loss_ratio must be positive")
        if self.min_rule_cover < 1:
            raise ValueError("min_rule_cover must be >= 1")

    @property
    def weights(self) -> tuple[float, float]:
        """(positive, negative) example weights; both 1 at loss ratio 1."""
        r = self.loss_ratio
        return 2 * r / (1 + r), 2 / (1 + r)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


class NoPositivesError(ValueError):
    """The target class has no examples in the data handed to the learner."""


# -- scoring ------------------------------------------------------------------

def foil_gain(p: float, n: float, p_after: float, n_after: float) -> float:
    if p <= 0 or p_after < 0 or n < 0 or n_after < 0 or p_after > p:
        raise ValueError("foil_gain needs p > 0 and 0 <= p_after <= p")
    if p_after == 0:
        return 0.0
    return p_after * (math.log2(p_after / (p_after + n_after)) - math.log2(p / (p + n)))


def prune_value(p: float, n: float, loss_ratio: float = 1.0) -> float:
    if p + n <= 0:
        raise ValueError("prune value undefined for an empty cover")
    wp, wn = TrainConfig(loss_ratio=loss_ratio).weights if loss_ratio != 1.0 else (1.0, 1.0)
    return (p * wp - n * wn) / (p * wp + n * wn)


def _log2_binom(n: float, k: float) -> float:
    if k <= 0 or k >= n:
        return 0.0
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2)


def _rule_bits(k: int, n_conditions: int) -> float:
    bits = math.log2(k + 1)
    if k:
        bits += k * math.log2(n_conditions)
    return 0.5 * bits


def _exception_bits(cov: int, uncov: int, fp: int, fn: int, wp: float = 1.0, wn: float = 1.0) -> float:
    return (wn * (_log2_binom(cov, fp) + math.log2(fp + 1))
            + wp * (_log2_binom(uncov, fn) + math.log2(fn + 1)))


def description_length(ruleset: RuleSet, data: Dataset, n_conditions: int | None = None) -> float:
    """Bits to encode the rules plus their exceptions on ``data``.

    Covered examples whose label differs from their first matching rule are
    false positives; uncovered examples not of the default class are false negatives.
    """
    if any(ex.label is None for ex in data):
        raise ValueError("description length needs labelled data")
    if n_conditions is None:
        n_conditions = compile_dataset(data).n_conditions
    bits = sum(_rule_bits(len(r), n_conditions) for r in ruleset.rules)
    cov = uncov = fp = fn = 0
    for ex in data:
        pred = ruleset.first_match(ex)
        if pred.rule is None:
            uncov += 1
            fn += ex.label != ruleset.default
        else:
            cov += 1
            fp += ex.label != pred.label
    return bits + _exception_bits(cov, uncov, fp, fn)


# -- matrix-level machinery -------------------------------------------------

class _Task:
    """One positive-vs-rest learning problem over a compiled matrix."""

    def __init__(self, mx: Matrix, y: np.ndarray, config: TrainConfig):
        self.mx = mx
        self.y = y
        self.config = config
        self.wp, self.wn = config.weights
        self._cache: dict[Condition, np.ndarray] = {}

    def cond_mask(self, c: Condition) -> np.ndarray:
        m = self._cache.get(c)
        if m is None:
            m = self.mx.condition_mask(c.feature, c.op, c.value)
            self._cache[c] = m
        return m

    def cover(self, conds: Sequence[Condition], within: np.ndarray | None = None) -> np.ndarray:
        m = np.ones(self.mx.n, dtype=bool) if within is None else within.copy()
        for c in conds:
            m &= self.cond_mask(c)
        return m

    def counts(self, mask: np.ndarray) -> tuple[int, int]:
        p = int(np.count_nonzero(mask & self.y))
        return p, int(np.count_nonzero(mask)) - p

    # grow ----------------------------------------------------------------

    def grow(self, grow_rows: np.ndarray, start: Sequence[Condition] = ()) -> list[Condition]:
        conds = list(start)
        covered = self.cover(conds, grow_rows)
        ops, decl, tie = self.mx.candidate_meta()
        min_cover = self.config.min_rule_cover
        while True:
            p, n = self.counts(covered)
            if n == 0 or p == 0:
                return conds
            p1, n1, observed = self.mx.candidate_counts(covered, self.y)
            if not len(p1):
                return conds
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(p1 > 0, p1 / (p1 + n1), 1.0)
                gain = np.where(p1 > 0, p1 * (np.log2(ratio) - math.log2(p / (p + n))), 0.0)
            gain = np.round(gain, 9)
            ok = observed & (p1 >= min_cover) & (gain > 0)
            if not ok.any():
                return conds
            idx = np.flatnonzero(ok)
            # primary: gain desc; then p_after desc; declaration order; smaller value; op
            order = np.lexsort((ops[idx], tie[idx], decl[idx], -p1[idx], -gain[idx]))
            best = int(idx[order[0]])
            c = Condition(*self.mx.candidate_condition(best))
            conds.append(c)
            covered &= self.cond_mask(c)

    # prune ---------------------------------------------------------------

    def prune(self, conds: Sequence[Condition], prune_rows: np.ndarray) -> list[Condition]:
        if not conds or not prune_rows.any():
            return list(conds)
        m = prune_rows.copy()
        best_k, best_v = len(conds), None
        values = []
        p, n = self.counts(m)
        values.append((p, n))
        for c in conds:
            m &= self.cond_mask(c)
            values.append(self.counts(m))
        for k, (p, n) in enumerate(values):
            if p + n == 0:
                continue
            v = (p * self.wp - n * self.wn) / (p * self.wp + n * self.wn)
            if best_v is None or v > best_v + 1e-12:
                best_k, best_v = k, v
        return list(conds[:best_k])

    # description length -----------------------------------------------------

    def dl(self, rules: Sequence[Sequence[Condition]], rows: np.ndarray) -> float:
        C = self.mx.n_conditions
        bits = sum(_rule_bits(len(r), C) for r in rules)
        covered = np.zeros(self.mx.n, dtype=bool)
        for r in rules:
            covered |= self.cover(r)
        covered &= rows
        cov = int(np.count_nonzero(covered))
        uncov = int(np.count_nonzero(rows)) - cov
        fp = cov - int(np.count_nonzero(covered & self.y))
        fn = int(np.count_nonzero(rows & self.y & ~covered))
        return bits + _exception_bits(cov, uncov, fp, fn, self.wp, self.wn)

    # splitting -------------------------------------------------------------

    def split(self, rows: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        frac = self.config.grow_fraction
        grow = np.zeros(self.mx.n, dtype=bool)
        for part, positive in ((rows & self.y, True), (rows & ~self.y, False)):
            idx = np.flatnonzero(part)
            if not len(idx):
                continue
            idx = rng.permutation(idx)
            k = int(round(frac * len(idx)))
            if positive:
                k = max(k, 1)  # the grow set must hold a positive
            grow[idx[:k]] = True
        return grow, rows & ~grow


def _class_rng(seed: int, cls: str, stage: str) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, zlib.crc32(cls.encode()), zlib.crc32(stage.encode())])


def _learn_rules(task: _Task, rows: np.ndarray, rng: np.random.Generator) -> list[list[Condition]]:
    cfg = task.config
    rules: list[list[Condition]] = []
    remaining = rows.copy()
    min_dl = task.dl(rules, rows)
    while np.any(remaining & task.y):
        grow_rows, prune_rows = task.split(remaining, rng)
        conds = task.grow(grow_rows)
        if task.counts(task.cover(conds, grow_rows))[0] < cfg.min_rule_cover:
            break
        conds = task.prune(conds, prune_rows)
        mask = task.cover(conds, remaining)
        p, n = task.counts(mask)
        if p == 0:
            break
        if n * task.wn / (p * task.wp + n * task.wn) > 0.5:
            break
        rules.append(conds)
        dl = task.dl(rules, rows)
        if dl > min_dl + cfg.mdl_slack_bits:
            rules.pop()
            break
        min_dl = min(min_dl, dl)
        remaining &= ~mask
    return rules


def _optimize(task: _Task, rules: list[list[Condition]], rows: np.ndarray,
              rng: np.random.Generator) -> list[list[Condition]]:
    rules = [list(r) for r in rules]
    for _ in range(task.config.optimization_passes):
        i = 0
        while i < len(rules):
            others = np.zeros(task.mx.n, dtype=bool)
            for j, r in enumerate(rules):
                if j != i:
                    others |= task.cover(r)
            residual = rows & ~others
            candidates: list[list[Condition] | None] = [rules[i]]
            if np.any(residual & task.y):
                grow_rows, prune_rows = task.split(residual, rng)
                replacement = task.prune(task.grow(grow_rows), prune_rows)
                revision = task.prune(task.grow(grow_rows, rules[i]), prune_rows)
                candidates += [replacement, revision]
            candidates.append(None)  # deletion
            best, best_dl = None, None
            for cand in candidates:
                trial = rules[:i] + ([cand] if cand is not None else []) + rules[i + 1:]
                d = task.dl(trial, rows)
                if best_dl is None or d < best_dl - 1e-9:
                    best, best_dl = cand, d
            if best is None:
                del rules[i]
                continue
            rules[i] = best
            i += 1
    return rules


def _target_mask(mx: Matrix, target_class: str) -> np.ndarray:
    if target_class not in mx.classes:
        raise NoPositivesError(f"class {target_class!r} not in the class universe")
    return mx.labels == mx.classes.index(target_class)


def _to_rules(task: _Task, rules: Iterable[Sequence[Condition]], cls: str, rows: np.ndarray) -> list[Rule]:
    out = []
    for conds in rules:
        p, n = task.counts(task.cover(conds, rows))
        out.append(Rule(tuple(conds), cls, p, n))
    return out


# -- public operations on datasets --------------------------------------------

def grow_rule(grow_set: Dataset, target_class: str, schema=None, config: TrainConfig = TrainConfig()) -> Rule:
    mx = compile_dataset(grow_set)
    y = _target_mask(mx, target_class)
    if not y.any():
        raise NoPositivesError(f"no {target_class!r} examples in grow set")
    task = _Task(mx, y, config)
    rows = np.ones(mx.n, dtype=bool)
    conds = task.grow(rows)
    p, n = task.counts(task.cover(conds))
    return Rule(tuple(conds), target_class, p, n)


def prune_rule(rule: Rule, prune_set: Dataset, target_class: str, config: TrainConfig = TrainConfig()) -> Rule:
    if len(prune_set) == 0:
        return rule
    mx = compile_dataset(prune_set)
    task = _Task(mx, _target_mask(mx, target_class), config)
    conds = task.prune(rule.conditions, np.ones(mx.n, dtype=bool))
    p, n = task.counts(task.cover(conds))
    return Rule(tuple(conds), rule.cls, p, n)


def learn_class_rules(data: Dataset, target_class: str, config: TrainConfig = TrainConfig()) -> list[Rule]:
    mx = compile_dataset(data)
    y = _target_mask(mx, target_class)
    if not y.any():
        raise NoPositivesError(f"no {target_class!r} examples")
    task = _Task(mx, y, config)
    rows = np.ones(mx.n, dtype=bool)
    rules = _learn_rules(task, rows, _class_rng(config.seed, target_class, "irep"))
    return _to_rules(task, rules, target_class, rows)


def optimize(rules: Sequence[Rule], data: Dataset, target_class: str,
             config: TrainConfig = TrainConfig()) -> list[Rule]:
    if config.optimization_passes == 0 or not rules:
        return list(rules)
    mx = compile_dataset(data)
    task = _Task(mx, _target_mask(mx, target_class), config)
    rows = np.ones(mx.n, dtype=bool)
    out = _optimize(task, [list(r.conditions) for r in rules], rows, _class_rng(config.seed, target_class, "opt"))
    return _to_rules(task, out, target_class, rows)


def rule_set_length(rules: Sequence[Rule], data: Dataset, target_class: str,
                    config: TrainConfig = TrainConfig()) -> float:
    """Description length of a positive-class rule list against ``target_class``-vs-rest."""
    mx = compile_dataset(data)
    task = _Task(mx, _target_mask(mx, target_class), config)
    return task.dl([list(r.conditions) for r in rules], np.ones(mx.n, dtype=bool))


def fit_matrix(mx: Matrix, rows: np.ndarray | None, config: TrainConfig) -> RuleSet:
    """Train on the rows of a precompiled matrix selected by ``rows``."""
    rows = np.ones(mx.n, dtype=bool) if rows is None else rows.copy()
    rows &= mx.labels >= 0
    if not rows.any():
        raise ValueError("cannot train on an empty dataset")
    counts = np.bincount(mx.labels[rows], minlength=len(mx.classes))
    present = [i for i in range(len(mx.classes)) if counts[i] > 0]
    # increasing frequency, ties by class-universe order
    ordered = sorted(present, key=lambda i: (counts[i], i))
    default = mx.classes[ordered[-1]]
    learned: list[Rule] = []
    class_order = []
    remaining = rows.copy()
    for ci in ordered[:-1]:
        cls = mx.classes[ci]
        class_order.append(cls)
        y = mx.labels == ci
        if not np.any(remaining & y):
            continue
        task = _Task(mx, y, config)
        rules = _learn_rules(task, remaining, _class_rng(config.seed, cls, "irep"))
        if config.optimization_passes and rules:
            rules = _optimize(task, rules, remaining, _class_rng(config.seed, cls, "opt"))
        for conds in rules:
            learned.append(Rule(tuple(conds), cls))
            remaining &= ~task.cover(conds)
    # stats: decision-list coverage on the training rows
    final = []
    open_ = rows.copy()
    for r in learned:
        task = _Task(mx, mx.labels == mx.classes.index(r.cls), config)
        m = task.cover(r.conditions, open_)
        p, n = task.counts(m)
        final.append(r.with_stats(p, n))
        open_ &= ~m
    return RuleSet(tuple(final), default, tuple(class_order), mx.schema, config.to_json())


def train(data: Dataset, config: TrainConfig = TrainConfig()) -> RuleSet:
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if all(ex.label is None for ex in data):
        raise SchemaError("training data is unlabelled")
    return fit_matrix(compile_dataset(data), None, config)
