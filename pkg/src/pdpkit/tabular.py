"""Feature schemas, example vectors, datasets and their line-delimited interchange format."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Sequence

CONTINUOUS = "continuous"
SYMBOLIC = "symbolic"
SET_VALUED = "set-valued"
KINDS = (CONTINUOUS, SYMBOLIC, SET_VALUED)

GROUPS = ("ASR", "SLU", "DM", "HAND", "DERIVED", "LABEL")

# Explicit missing state. Omitted keys mean the same thing; neither is ever zero.
MISSING = None


class SchemaError(ValueError):
    """Base class for schema and validation failures."""

    def __init__(self, message: str, feature: str | None = None):
        super().__init__(message)
        self.feature = feature


class DuplicateFeatureError(SchemaError):
    pass


class UnknownFeatureError(SchemaError):
    pass


class KindMismatchError(SchemaError):
    pass


class ValueNotAllowedError(SchemaError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    group: str
    allowed: tuple[str, ...] | None = None
    # Features that reveal the dialogue has ended (excluded from early windows).
    terminal: bool = False

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind, "group": self.group}
        if self.allowed is not None:
            out["allowed"] = list(self.allowed)
        if self.terminal:
            out["terminal"] = True
        return out

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "FeatureSpec":
        allowed = obj.get("allowed")
        return cls(
            name=obj["name"],
            kind=obj["kind"],
            group=obj["group"],
            allowed=tuple(allowed) if allowed is not None else None,
            terminal=bool(obj.get("terminal", False)),
        )


class FeatureSchema:
    """Ordered, immutable feature declarations with exactly one LABEL entry."""

    __slots__ = ("entries", "_index", "_fingerprint")

    def __init__(self, entries: Iterable[FeatureSpec]):
        entries = tuple(entries)
        if not entries:
            raise SchemaError("schema needs at least one entry")
        index: dict[str, int] = {}
        for i, spec in enumerate(entries):
            if not spec.name:
                raise SchemaError("feature name must be non-empty")
            if spec.name in index:
                raise DuplicateFeatureError(f"duplicate feature name {spec.name!r}", spec.name)
            if spec.kind not in KINDS:
                raise SchemaError(f"unknown kind {spec.kind!r} for {spec.name!r}", spec.name)
            if spec.group not in GROUPS:
                raise SchemaError(f"unknown group {spec.group!r} for {spec.name!r}", spec.name)
            if spec.allowed is not None and spec.kind != SYMBOLIC:
                raise SchemaError(f"allowed values only apply to symbolic features ({spec.name!r})", spec.name)
            index[spec.name] = i
        n_label = sum(1 for s in entries if s.group == "LABEL")
        if n_label != 1:
            raise SchemaError(f"schema must declare exactly one LABEL entry, found {n_label}")
        self.entries = entries
        self._index = index
        self._fingerprint: str | None = None

    @property
    def label(self) -> FeatureSpec:
        return next(s for s in self.entries if s.group == "LABEL")

    @property
    def features(self) -> tuple[FeatureSpec, ...]:
        """Non-label entries in declaration order."""
        return tuple(s for s in self.entries if s.group != "LABEL")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.features)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> FeatureSpec:
        try:
            return self.entries[self._index[name]]
        except KeyError:
            raise UnknownFeatureError(f"unknown feature {name!r}", name) from None

    def position(self, name: str) -> int:
        return self._index[name]

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FeatureSchema) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        return f"FeatureSchema({len(self.features)} features, label={self.label.name!r})"

    def to_json(self) -> list[dict[str, Any]]:
        return [s.to_json() for s in self.entries]

    @classmethod
    def from_json(cls, obj: Sequence[Mapping[str, Any]]) -> "FeatureSchema":
        return cls(FeatureSpec.from_json(o) for o in obj)

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
            self._fingerprint = hashlib.sha256(payload.encode()).hexdigest()[:16]
        return self._fingerprint


def define_schema(entries: Iterable[FeatureSpec | tuple | Mapping[str, Any]]) -> FeatureSchema:
    """Build a schema from specs, ``(name, kind, group[, allowed])`` tuples or dicts."""
    specs = []
    for e in entries:
        if isinstance(e, FeatureSpec):
            specs.append(e)
        elif isinstance(e, Mapping):
            specs.append(FeatureSpec.from_json(e))
        else:
            name, kind, group, *rest = e
            allowed = tuple(rest[0]) if rest and rest[0] is not None else None
            specs.append(FeatureSpec(name, kind, group, allowed))
    if not specs:
        raise SchemaError("entries must be non-empty")
    return FeatureSchema(specs)


@dataclass(frozen=True)
class FeatureVector:
    """One example. ``values`` maps feature name to a number, symbol or token tuple."""

    values: Mapping[str, Any]
    label: str | None = None
    id: str = ""

    def get(self, name: str) -> Any:
        return self.values.get(name, MISSING)


def tokenize(text: str | Iterable[str] | None) -> tuple[str, ...]:
    """Whitespace tokenization plus lowercasing; result is a sorted token multiset."""
    if text is None:
        return ()
    if isinstance(text, str):
        toks = text.lower().split()
    else:
        toks = [t.lower() for t in text]
    return tuple(sorted(toks))


def _check_value(spec: FeatureSpec, value: Any) -> None:
    if value is MISSING:
        return
    if spec.kind == CONTINUOUS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise KindMismatchError(f"{spec.name}: expected a number, got {type(value).__name__}", spec.name)
        if not math.isfinite(value):
            raise KindMismatchError(f"{spec.name}: non-finite value {value!r}", spec.name)
    elif spec.kind == SYMBOLIC:
        if not isinstance(value, str):
            raise KindMismatchError(f"{spec.name}: expected a symbol, got {type(value).__name__}", spec.name)
        if spec.allowed is not None and value not in spec.allowed:
            raise ValueNotAllowedError(f"{spec.name}: value {value!r} not in allowed set", spec.name)
    else:
        if isinstance(value, str) or not isinstance(value, (tuple, list, frozenset)):
            raise KindMismatchError(f"{spec.name}: expected a token multiset, got {type(value).__name__}", spec.name)
        for tok in value:
            if not isinstance(tok, str):
                raise KindMismatchError(f"{spec.name}: tokens must be strings", spec.name)


def validate_example(schema: FeatureSchema, raw: FeatureVector) -> FeatureVector:
    """Return ``raw`` unchanged if every present value matches its declared kind."""
    label_name = schema.label.name
    for name, value in raw.values.items():
        if name not in schema or name == label_name:
            raise UnknownFeatureError(f"unknown feature {name!r}", name)
        _check_value(schema[name], value)
    label_spec = schema.label
    if raw.label is not None and label_spec.allowed is not None and raw.label not in label_spec.allowed:
        raise ValueNotAllowedError(f"label {raw.label!r} not in allowed set", label_spec.name)
    return raw


class Dataset:
    """Schema plus an ordered, immutable sequence of examples."""

    __slots__ = ("schema", "examples", "classes")

    def __init__(self, schema: FeatureSchema, examples: Iterable[FeatureVector],
                 classes: Sequence[str] | None = None, validate: bool = True):
        examples = tuple(examples)
        if classes is None:
            if schema.label.allowed is not None:
                classes = schema.label.allowed
            else:
                seen: dict[str, None] = {}
                for ex in examples:
                    if ex.label is not None:
                        seen.setdefault(ex.label)
                classes = tuple(seen)
        classes = tuple(classes)
        universe = set(classes)
        for ex in examples:
            if ex.label is not None and ex.label not in universe:
                raise SchemaError(f"example {ex.id!r}: label {ex.label!r} outside class universe")
            if validate:
                validate_example(schema, ex)
        self.schema = schema
        self.examples = examples
        self.classes = classes

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[FeatureVector]:
        return iter(self.examples)

    def __getitem__(self, i: int) -> FeatureVector:
        return self.examples[i]

    @property
    def labels(self) -> list[str | None]:
        return [ex.label for ex in self.examples]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.schema, (self.examples[i] for i in indices), self.classes, validate=False)

    def relabel(self, mapping: Mapping[str, str], classes: Sequence[str]) -> "Dataset":
        label_spec = self.schema.label
        schema = FeatureSchema(
            FeatureSpec(s.name, s.kind, s.group, tuple(classes)) if s is label_spec else s
            for s in self.schema.entries
        )
        examples = (
            FeatureVector(ex.values, mapping[ex.label] if ex.label is not None else None, ex.id)
            for ex in self.examples
        )
        return Dataset(schema, examples, classes, validate=False)


def project(dataset: Dataset, feature_set: Iterable[str]) -> Dataset:
    """Keep only the named features (the label is always retained)."""
    wanted = set(feature_set)
    label_name = dataset.schema.label.name
    wanted.discard(label_name)
    for name in sorted(wanted):
        if name not in dataset.schema:
            raise UnknownFeatureError(f"unknown feature {name!r} in feature set", name)
    entries = [s for s in dataset.schema.entries if s.name in wanted or s.name == label_name]
    schema = FeatureSchema(entries)
    if schema == dataset.schema:
        return dataset
    examples = (
        FeatureVector({k: v for k, v in ex.values.items() if k in wanted}, ex.label, ex.id)
        for ex in dataset.examples
    )
    return Dataset(schema, examples, dataset.classes, validate=False)


# Interchange: first line {"#schema": ...}, then one {"id", "label", "values"} record per line.

def _encode_value(value: Any) -> Any:
    if isinstance(value, (tuple, frozenset)):
        return list(value)
    return value


def dataset_lines(dataset: Dataset) -> Iterator[str]:
    header = {"#schema": {"entries": dataset.schema.to_json(), "classes": list(dataset.classes)}}
    yield json.dumps(header, separators=(",", ":"))
    order = {name: i for i, name in enumerate(dataset.schema.names)}
    for ex in dataset.examples:
        values = {
            k: _encode_value(v)
            for k, v in sorted(ex.values.items(), key=lambda kv: order.get(kv[0], len(order)))
            if v is not MISSING
        }
        yield json.dumps({"id": ex.id, "label": ex.label, "values": values}, separators=(",", ":"))


def dumps_dataset(dataset: Dataset) -> str:
    return "\n".join(dataset_lines(dataset)) + "\n"


def loads_dataset(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("empty dataset file")
    header = json.loads(lines[0])
    if "#schema" not in header:
        raise SchemaError("first line must be the #schema header record")
    schema = FeatureSchema.from_json(header["#schema"]["entries"])
    classes = header["#schema"].get("classes")
    kinds = {s.name: s.kind for s in schema.entries}
    examples = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        values = {}
        for k, v in rec.get("values", {}).items():
            if kinds.get(k) == SET_VALUED and isinstance(v, list):
                v = tuple(v)
            values[k] = v
        examples.append(FeatureVector(values, rec.get("label"), str(rec.get("id", ""))))
    return Dataset(schema, examples, classes)
