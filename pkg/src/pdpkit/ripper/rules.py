"""Conditions, rules and ordered rule sets, with their text and canonical formats."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, NamedTuple

import numpy as np

from ..tabular import (
    CONTINUOUS,
    SET_VALUED,
    SYMBOLIC,
    Dataset,
    FeatureSchema,
    FeatureVector,
    SchemaError,
    validate_example,
)

FORMAT_TAG = "pdpkit.ruleset/1"

_FORM_KIND = {"<=": CONTINUOUS, ">=": CONTINUOUS, "=": SYMBOLIC, "contains": SET_VALUED}


class SchemaMismatchError(SchemaError):
    """Input does not conform to the schema a model was trained on."""


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str
    value: float | str

    def __post_init__(self):
        if self.op not in _FORM_KIND:
            raise ValueError(f"unknown condition form {self.op!r}")
        if self.op in ("<=", ">="):
            if isinstance(self.value, bool) or not isinstance(self.value, (int, float)):
                raise ValueError("numeric condition needs a number")
            if not math.isfinite(self.value):
                raise ValueError("numeric thresholds must be finite")
            object.__setattr__(self, "value", float(self.value))
        elif not isinstance(self.value, str):
            raise ValueError(f"{self.op!r} condition needs a string value")

    @property
    def kind(self) -> str:
        return _FORM_KIND[self.op]

    def matches(self, x: FeatureVector | Mapping[str, Any]) -> bool:
        values = x.values if isinstance(x, FeatureVector) else x
        v = values.get(self.feature)
        if v is None:
            return False
        if self.op == "<=":
            return v <= self.value
        if self.op == ">=":
            return v >= self.value
        if self.op == "=":
            return v == self.value
        return self.value in v

    def render(self) -> str:
        if self.op in ("<=", ">="):
            val = _fmt_number(self.value)
        elif self.op == "=":
            val = self.value if _BARE.fullmatch(self.value) else json.dumps(self.value)
        else:
            val = json.dumps(self.value)
        return f"({self.feature} {self.op} {val})"


@dataclass(frozen=True)
class Rule:
    conditions: tuple[Condition, ...]
    cls: str
    p: int = 0
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.p < 0 or self.n < 0:
            raise ValueError("rule stats must be non-negative")

    def matches(self, x) -> bool:
        return all(c.matches(x) for c in self.conditions)

    def with_stats(self, p: int, n: int) -> "Rule":
        return replace(self, p=int(p), n=int(n))

    def render(self) -> str:
        body = " ^ ".join(c.render() for c in self.conditions) if self.conditions else "true"
        return f"if {body} then {self.cls} ({self.p}/{self.n})"

    def __len__(self) -> int:
        return len(self.conditions)


class Prediction(NamedTuple):
    label: str
    rule: int | None  # index of the matching rule; None means the default fired


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]
    default: str
    class_order: tuple[str, ...]
    schema: FeatureSchema | None = None
    config: Mapping[str, Any] = field(default_factory=dict)
    fingerprint: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "class_order", tuple(self.class_order))
        if self.schema is not None and not self.fingerprint:
            object.__setattr__(self, "fingerprint", self.schema.fingerprint)
        known = set(self.class_order) | {self.default}
        for r in self.rules:
            if r.cls not in known:
                raise ValueError(f"rule class {r.cls!r} not in class order or default")

    def __len__(self) -> int:
        return len(self.rules)

    def first_match(self, x) -> Prediction:
        for i, r in enumerate(self.rules):
            if r.matches(x):
                return Prediction(r.cls, i)
        return Prediction(self.default, None)

    # -- formats --------------------------------------------------------------

    def to_record(self) -> dict[str, Any]:
        return {
            "format": FORMAT_TAG,
            "rules": [
                {"if": [[c.feature, c.op, c.value] for c in r.conditions], "then": r.cls, "p": r.p, "n": r.n}
                for r in self.rules
            ],
            "default": self.default,
            "class_order": list(self.class_order),
            "config": dict(self.config),
            "schema_fingerprint": self.fingerprint,
            "schema": self.schema.to_json() if self.schema is not None else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "RuleSet":
        if rec.get("format") != FORMAT_TAG:
            raise ValueError(f"not a ruleset record (format={rec.get('format')!r})")
        schema = FeatureSchema.from_json(rec["schema"]) if rec.get("schema") else None
        rules = tuple(
            Rule(tuple(Condition(f, op, v) for f, op, v in r["if"]), r["then"], r.get("p", 0), r.get("n", 0))
            for r in rec["rules"]
        )
        return cls(rules, rec["default"], tuple(rec["class_order"]), schema,
                   dict(rec.get("config", {})), rec.get("schema_fingerprint", ""))

    @classmethod
    def loads(cls, text: str) -> "RuleSet":
        return cls.from_record(json.loads(text))

    def render(self) -> str:
        """Human-readable form: one ``if ... then CLASS`` line per rule, then ``default CLASS``."""
        lines = [f"# schema {self.fingerprint or '-'}", f"# classes {' '.join(self.class_order) or '-'}"]
        if self.config:
            lines.append("# config " + json.dumps(dict(self.config), sort_keys=True, separators=(",", ":")))
        lines += [r.render() for r in self.rules]
        lines.append(f"default {self.default}")
        return "\n".join(lines) + "\n"


_BARE = re.compile(r"[A-Za-z0-9_.+\-/]+")


def _fmt_number(x: float) -> str:
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def parse_rules_text(text: str, schema: FeatureSchema | None = None) -> RuleSet:
    """Inverse of :meth:`RuleSet.render`."""
    rules, default, class_order, config, fp = [], None, (), {}, ""
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, rest = line[1:].strip().partition(" ")
            if key == "schema":
                fp = "" if rest == "-" else rest
            elif key == "classes":
                class_order = () if rest == "-" else tuple(rest.split())
            elif key == "config":
                config = json.loads(rest)
            continue
        if line.startswith("default "):
            default = line[len("default "):].strip()
            continue
        if not line.startswith("if "):
            raise ValueError(f"unparseable rule line: {raw!r}")
        rules.append(_parse_rule(line))
    if default is None:
        raise ValueError("rule text lacks a 'default CLASS' line")
    if schema is not None and fp and schema.fingerprint != fp:
        raise SchemaMismatchError("schema fingerprint differs from the one recorded in the rule text")
    return RuleSet(tuple(rules), default, class_order, schema, config, fp)


_STATS = re.compile(r"\s+\((\d+)/(\d+)\)$")


def _parse_rule(line: str) -> Rule:
    p = n = 0
    m = _STATS.search(line)
    if m:
        p, n = int(m.group(1)), int(m.group(2))
        line = line[:m.start()]
    body, sep, cls = line[3:].rpartition(" then ")
    if not sep:
        raise ValueError(f"rule line lacks 'then': {line!r}")
    body = body.strip()
    conds = [] if body == "true" else _parse_conditions(body)
    return Rule(tuple(conds), cls.strip(), p, n)


def _parse_conditions(body: str) -> list[Condition]:
    out, i, dec = [], 0, json.JSONDecoder()
    while i < len(body):
        if body[i] in " ^":
            i += 1
            continue
        if body[i] != "(":
            raise ValueError(f"expected '(' at {i} in {body!r}")
        j = body.index(" ", i)
        feature = body[i + 1:j]
        k = body.index(" ", j + 1)
        op = body[j + 1:k]
        i = k + 1
        if body[i] == '"':
            value, i = dec.raw_decode(body, i)
        else:
            end = body.index(")", i)
            token, i = body[i:end], end
            value = float(token) if op in ("<=", ">=") else token
        if body[i] != ")":
            raise ValueError(f"expected ')' at {i} in {body!r}")
        i += 1
        out.append(Condition(feature, op, value))
    return out


def predict(model: RuleSet, x: FeatureVector) -> Prediction:
    """First matching rule wins; conditions on missing values never match."""
    if model.schema is not None:
        try:
            validate_example(model.schema, x)
        except SchemaError as exc:
            raise SchemaMismatchError(f"input does not fit model schema: {exc}", exc.feature) from exc
    return model.first_match(x)


def predict_dataset(model: RuleSet, data: Dataset, matrix=None) -> list[Prediction]:
    """Vectorized :func:`predict` over a whole dataset."""
    if model.fingerprint and data.schema.fingerprint != model.fingerprint:
        raise SchemaMismatchError(
            f"dataset schema {data.schema.fingerprint} differs from model schema {model.fingerprint}"
        )
    from .matrix import compile_dataset

    mx = matrix if matrix is not None else compile_dataset(data)
    which = np.full(mx.n, -1, dtype=np.int64)
    open_ = np.ones(mx.n, dtype=bool)
    for i, r in enumerate(model.rules):
        m = open_.copy()
        for c in r.conditions:
            m &= mx.condition_mask(c.feature, c.op, c.value)
        which[m] = i
        open_ &= ~m
    return [
        Prediction(model.rules[w].cls, int(w)) if w >= 0 else Prediction(model.default, None)
        for w in which
    ]
