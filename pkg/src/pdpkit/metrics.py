"""Accuracy, confusion matrices, precision/recall, majority baselines and paired t-tests."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence

from scipy import stats

# Marker for ratios whose denominator is zero. Never silently 0.
UNDEFINED = None


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # row = true class, column = predicted class

    def __post_init__(self):
        k = len(self.classes)
        if len(self.counts) != k or any(len(r) != k for r in self.counts):
            raise ValueError("confusion counts must be a square grid over the classes")
        if any(c < 0 for r in self.counts for c in r):
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_counts(cls, classes: Sequence[str], counts: Sequence[Sequence[int]]) -> "ConfusionMatrix":
        return cls(tuple(classes), tuple(tuple(int(c) for c in row) for row in counts))

    @property
    def total(self) -> int:
        return sum(sum(r) for r in self.counts)

    @property
    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.classes)))

    def row_sum(self, i: int) -> int:
        return sum(self.counts[i])

    def col_sum(self, j: int) -> int:
        return sum(r[j] for r in self.counts)

    def to_json(self) -> dict[str, Any]:
        return {"classes": list(self.classes), "counts": [list(r) for r in self.counts]}

    def render(self) -> str:
        width = max(len(c) for c in self.classes) + 2
        head = " " * width + "".join(f"{c:>{width}}" for c in self.classes)
        rows = [f"{c:<{width}}" + "".join(f"{v:>{width}}" for v in r) for c, r in zip(self.classes, self.counts)]
        return "\n".join([head, *rows])


def confusion(truth: Sequence[str], pred: Sequence[str], classes: Sequence[str]) -> ConfusionMatrix:
    if len(truth) != len(pred):
        raise ValueError(f"length mismatch: {len(truth)} truths vs {len(pred)} predictions")
    index = {c: i for i, c in enumerate(classes)}
    grid = [[0] * len(classes) for _ in classes]
    for t, p in zip(truth, pred):
        if t not in index or p not in index:
            raise ValueError(f"label outside class list: {t if t not in index else p!r}")
        grid[index[t]][index[p]] += 1
    return ConfusionMatrix.from_counts(classes, grid)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else UNDEFINED


def precision_recall(m: ConfusionMatrix) -> dict[str, tuple[float | None, float | None]]:
    """Per class: (recall, precision); a zero denominator gives ``UNDEFINED``."""
    return {
        c: (_ratio(m.counts[i][i], m.row_sum(i)), _ratio(m.counts[i][i], m.col_sum(i)))
        for i, c in enumerate(m.classes)
    }


def accuracy(m: ConfusionMatrix) -> float:
    if m.total == 0:
        raise ValueError("accuracy of an empty matrix is undefined")
    return m.trace / m.total


def majority_baseline(labels: Sequence[str], classes: Sequence[str] | None = None) -> tuple[str, float]:
    """Most frequent class and its share; ties go to the class listed first."""
    if not labels:
        raise ValueError("majority baseline needs at least one label")
    counts = Counter(labels)
    order = list(classes) if classes is not None else list(dict.fromkeys(labels))
    best = max(order, key=lambda c: (counts.get(c, 0), -order.index(c)))
    return best, counts.get(best, 0) / len(labels)


class TTest(NamedTuple):
    t: float
    df: int
    p: float
    # zero-variance differences with a non-zero mean: the difference is certain
    degenerate: bool = False


def paired_t(correct_a: Sequence[float], correct_b: Sequence[float]) -> TTest:
    """Two-sided paired t-test on per-example scores."""
    if len(correct_a) != len(correct_b):
        raise ValueError("paired vectors differ in length")
    n = len(correct_a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = [float(a) - float(b) for a, b in zip(correct_a, correct_b)]
    mean = sum(d) / n
    var = sum((x - mean) ** 2 for x in d) / (n - 1)
    df = n - 1
    if var == 0:
        if mean == 0:
            return TTest(0.0, df, 1.0)
        return TTest(math.copysign(math.inf, mean), df, 0.0, True)
    t = mean / math.sqrt(var / n)
    p = float(2 * stats.t.sf(abs(t), df))
    return TTest(t, df, p)


@dataclass(frozen=True)
class TTestResult:
    reference: str
    t: float
    df: int
    p: float
    degenerate: bool = False

    def to_json(self) -> dict[str, Any]:
        t = self.t if math.isfinite(self.t) else ("inf" if self.t > 0 else "-inf")
        return {"reference": self.reference, "t": t, "df": self.df, "p": self.p, "degenerate": self.degenerate}


@dataclass(frozen=True)
class EvalReport:
    config: Mapping[str, Any]
    accuracy: float
    per_class: Mapping[str, tuple[float | None, float | None]]
    matrix: ConfusionMatrix
    baseline: tuple[str, float]
    ttests: tuple[TTestResult, ...] = ()
    correct: tuple[int, ...] = field(default=(), repr=False)
    ids: tuple[str, ...] = field(default=(), repr=False)

    @property
    def name(self) -> str:
        return str(self.config.get("name", ""))

    def with_ttests(self, tests: Sequence[TTestResult]) -> "EvalReport":
        return EvalReport(self.config, self.accuracy, self.per_class, self.matrix, self.baseline,
                          tuple(tests), self.correct, self.ids)

    def to_json(self) -> dict[str, Any]:
        return {
            "config": dict(self.config),
            "accuracy": self.accuracy,
            "per_class": {c: {"recall": r, "precision": p} for c, (r, p) in self.per_class.items()},
            "matrix": self.matrix.to_json(),
            "baseline": {"class": self.baseline[0], "accuracy": self.baseline[1]},
            "ttests": [t.to_json() for t in self.ttests],
            "n": self.matrix.total,
        }


def evaluate(truth: Sequence[str], pred: Sequence[str], classes: Sequence[str],
             config: Mapping[str, Any] | None = None, baseline_class: str | None = None,
             ids: Sequence[str] = ()) -> EvalReport:
    """Score one prediction stream.

    The baseline always guesses ``baseline_class`` (by default the majority of ``truth``).
    """
    m = confusion(truth, pred, classes)
    if baseline_class is None:
        baseline = majority_baseline(truth, classes)
    else:
        baseline = (baseline_class, sum(1 for t in truth if t == baseline_class) / len(truth))
    return EvalReport(
        config=dict(config or {}),
        accuracy=accuracy(m),
        per_class=precision_recall(m),
        matrix=m,
        baseline=baseline,
        correct=tuple(int(t == p) for t, p in zip(truth, pred)),
        ids=tuple(ids),
    )


def pct(x: float | None) -> str:
    return "undef" if x is None else f"{100 * x:.1f}"


def render_precision_recall(report: EvalReport) -> str:
    lines = ["Class\tRecall\tPrecision"]
    lines += [f"{c}\t{pct(r)}\t{pct(p)}" for c, (r, p) in report.per_class.items()]
    return "\n".join(lines)
