"""Dialogue logs: parsing, SLU and outcome labels, per-exchange encoding and windows."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from .tabular import (
    CONTINUOUS,
    SET_VALUED,
    SYMBOLIC,
    FeatureSchema,
    FeatureSpec,
    FeatureVector,
    tokenize,
)

# -- label vocabularies -------------------------------------------------------

RCORRECT = "RCORRECT"
RPARTIAL = "RPARTIAL-MATCH"
RMISMATCH = "RMISMATCH"
NO_RECOG = "NO-RECOG"
RINCORRECT = "RINCORRECT"
SLU_CLASSES = (RCORRECT, RPARTIAL, RMISMATCH, NO_RECOG)
SLU_BINARY = (RCORRECT, RINCORRECT)

TASKSUCCESS = "TASKSUCCESS"
TASKFAILURE = "TASKFAILURE"
HANGUP = "HANGUP"
WIZARD = "WIZARD"
PROBLEMATIC = "PROBLEMATIC"
OUTCOMES = (TASKSUCCESS, TASKFAILURE, WIZARD, HANGUP)
BINARY_OUTCOMES = (TASKSUCCESS, PROBLEMATIC)

COMPLETED = "completed"
USER_HANGUP = "user-hangup"
WIZARD_TAKEOVER = "wizard-takeover"
TERMINALS = (COMPLETED, USER_HANGUP, WIZARD_TAKEOVER)

N_TASKS = 15
DEFAULT_TASK_NAMES = tuple(f"task{k}" for k in range(1, N_TASKS + 1))

EX1, EX12, WHOLE = "EX1", "EX12", "WHOLE"
WINDOWS = (EX1, EX12, WHOLE)

DIFF_TOLERANCE = 1e-3


class LogFormatError(ValueError):
    """A dialogue record that cannot be mapped onto the log model."""


class MissingHandLabelsError(ValueError):
    pass


def collapse_slu_binary(outcome: str) -> str:
    if outcome not in SLU_CLASSES and outcome not in SLU_BINARY:
        raise ValueError(f"unknown SLU outcome {outcome!r}")
    return RCORRECT if outcome == RCORRECT else RINCORRECT


def collapse_outcome(outcome: str) -> str:
    if outcome not in OUTCOMES:
        raise ValueError(f"unknown dialogue outcome {outcome!r}")
    return TASKSUCCESS if outcome == TASKSUCCESS else PROBLEMATIC


class DialogueOutcome(NamedTuple):
    raw: str
    binary: str


# -- records ------------------------------------------------------------------

@dataclass(frozen=True)
class HandLabels:
    tscript: str | None = None
    clean_tscript: str | None = None
    cltscript_numwords: int | None = None
    human_label: tuple[str, ...] = ()
    user_modality: str | None = None


@dataclass(frozen=True)
class ExchangeLog:
    index: int
    prompt: str | None = None
    reprompt: bool | None = None
    confirm: bool | None = None
    subdial: bool | None = None
    recog: tuple[str, ...] | None = None
    recog_numwords: int | None = None
    asr_duration: float | None = None
    dtmf_flag: bool | None = None
    rg_modality: str | None = None
    rg_grammar: str | None = None
    task_confidences: tuple[float, ...] | None = None
    no_info: float | None = None
    top_task: str | None = None
    nexttop_task: str | None = None
    top_confidence: float | None = None
    diff_confidence: float | None = None
    salience_coverage: float | None = None
    inconsistency: float | None = None
    context_shift: float | None = None
    sys_label: str | None = None
    spoken_digit: str | None = None
    hand: HandLabels | None = None
    digits_correct: bool | None = None
    is_closing_prompt_only: bool = False
    no_input: bool = False


@dataclass(frozen=True)
class DialogueRecord:
    id: str
    exchanges: tuple[ExchangeLog, ...]
    terminal: str
    dial_duration: float | None = None
    caller: Mapping[str, Any] | None = None
    # task the system actually carried out; compared with the hand labels
    executed_task: str | None = None
    warnings: int = field(default=0, compare=False)

    @property
    def has_hand_labels(self) -> bool:
        return all(x.hand is not None for x in self.exchanges)


# -- parsing ------------------------------------------------------------------

_EXCHANGE_FIELDS = {f.name for f in fields(ExchangeLog)}
_DIALOGUE_FIELDS = {"id", "terminal", "dial_duration", "caller", "exchanges", "executed_task"}
_HAND_FIELDS = {f.name for f in fields(HandLabels)}
_REAL_FIELDS = ("asr_duration", "no_info", "top_confidence", "diff_confidence",
                "salience_coverage", "inconsistency", "context_shift")
_UNIT_FIELDS = ("no_info", "top_confidence", "diff_confidence", "salience_coverage")
_TEXT_FIELDS = ("prompt", "rg_modality", "rg_grammar", "top_task", "nexttop_task", "sys_label", "spoken_digit")
_BOOL_FIELDS = ("reprompt", "confirm", "subdial", "dtmf_flag", "digits_correct")


def _real(name: str, v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise LogFormatError(f"{name}: expected a finite number, got {v!r}")
    return float(v)


def _count(name: str, v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 or v != int(v):
        raise LogFormatError(f"{name}: expected a non-negative integer, got {v!r}")
    return int(v)


def _flag(name: str, v: Any) -> bool:
    if isinstance(v, bool):
        return v
    if v in (0, 1, "0", "1"):
        return bool(int(v))
    raise LogFormatError(f"{name}: expected a boolean, got {v!r}")


def _words(name: str, v: Any) -> tuple[str, ...]:
    # spoken order is kept in the log; encoding turns words into a token multiset
    if isinstance(v, str):
        return tuple(v.split())
    if isinstance(v, (list, tuple)) and all(isinstance(t, str) for t in v):
        return tuple(v)
    raise LogFormatError(f"{name}: expected text or a list of words")


def _parse_hand(obj: Any) -> tuple[HandLabels, int]:
    if not isinstance(obj, Mapping):
        raise LogFormatError("hand: expected an object")
    unknown = sum(1 for k in obj if k not in _HAND_FIELDS)
    human = obj.get("human_label", ())
    if isinstance(human, str):
        human = human.split()
    if not isinstance(human, (list, tuple)) or not all(isinstance(t, str) for t in human):
        raise LogFormatError("hand.human_label: expected a list of labels")
    n = obj.get("cltscript_numwords")
    return HandLabels(
        tscript=obj.get("tscript"),
        clean_tscript=obj.get("clean_tscript"),
        cltscript_numwords=_count("cltscript_numwords", n) if n is not None else None,
        human_label=tuple(human),
        user_modality=obj.get("user_modality"),
    ), unknown


def _parse_exchange(obj: Any, position: int) -> tuple[ExchangeLog, int]:
    if not isinstance(obj, Mapping):
        raise LogFormatError(f"exchange {position}: expected an object")
    unknown = sum(1 for k in obj if k not in _EXCHANGE_FIELDS)
    kw: dict[str, Any] = {"index": _count("index", obj.get("index", position))}
    for name in _REAL_FIELDS:
        if obj.get(name) is not None:
            kw[name] = _real(name, obj[name])
    for name in _TEXT_FIELDS:
        v = obj.get(name)
        if v is not None:
            if isinstance(v, bool) or not isinstance(v, (str, int)):
                raise LogFormatError(f"{name}: expected a symbol, got {v!r}")
            kw[name] = str(v)
    for name in _BOOL_FIELDS:
        if obj.get(name) is not None:
            kw[name] = _flag(name, obj[name])
    for name in ("is_closing_prompt_only", "no_input"):
        kw[name] = _flag(name, obj.get(name, False))
    if obj.get("recog") is not None:
        kw["recog"] = _words("recog", obj["recog"])
    if obj.get("recog_numwords") is not None:
        kw["recog_numwords"] = _count("recog_numwords", obj["recog_numwords"])
    confs = obj.get("task_confidences")
    if confs is not None:
        if not isinstance(confs, (list, tuple)) or len(confs) != N_TASKS:
            raise LogFormatError(f"task_confidences: expected {N_TASKS} values")
        kw["task_confidences"] = tuple(_real("task_confidences", c) for c in confs)
    if obj.get("hand") is not None:
        kw["hand"], extra = _parse_hand(obj["hand"])
        unknown += extra

    x = ExchangeLog(**kw)
    where = f"exchange {x.index}"
    if x.asr_duration is not None and x.asr_duration < 0:
        raise LogFormatError(f"{where}: negative asr_duration {x.asr_duration}")
    for name in _UNIT_FIELDS:
        v = getattr(x, name)
        if v is not None and not 0.0 <= v <= 1.0:
            raise LogFormatError(f"{where}: {name} {v} outside [0, 1]")
    if x.task_confidences is not None:
        if any(not 0.0 <= c <= 1.0 for c in x.task_confidences):
            raise LogFormatError(f"{where}: task confidence outside [0, 1]")
        if x.top_confidence is not None and x.diff_confidence is not None:
            second = sorted(x.task_confidences, reverse=True)[1]
            if abs(x.top_confidence - second - x.diff_confidence) > DIFF_TOLERANCE:
                raise LogFormatError(
                    f"{where}: diff_confidence {x.diff_confidence} != top {x.top_confidence} - second {second}"
                )
    return x, unknown


def parse_dialogue_log(record: str | Mapping[str, Any]) -> DialogueRecord:
    """Map one serialized dialogue onto a :class:`DialogueRecord`.

    Unknown fields are ignored and tallied in ``warnings``.
    """
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"malformed record: {exc}") from None
    if not isinstance(record, Mapping):
        raise LogFormatError("dialogue record must be an object")
    for key in ("id", "terminal", "exchanges"):
        if key not in record:
            raise LogFormatError(f"dialogue record lacks {key!r}")
    if record["terminal"] not in TERMINALS:
        raise LogFormatError(f"unknown terminal event {record['terminal']!r}")
    raw_ex = record["exchanges"]
    if not isinstance(raw_ex, list) or not raw_ex:
        raise LogFormatError("exchanges must be a non-empty list")
    warnings = sum(1 for k in record if k not in _DIALOGUE_FIELDS)
    exchanges = []
    for pos, obj in enumerate(raw_ex, start=1):
        x, extra = _parse_exchange(obj, pos)
        if x.index != pos:
            raise LogFormatError(f"exchange at position {pos} carries index {x.index}")
        exchanges.append(x)
        warnings += extra
    dur = record.get("dial_duration")
    if dur is not None:
        dur = _real("dial_duration", dur)
        if dur < 0:
            raise LogFormatError(f"negative dial_duration {dur}")
    caller = record.get("caller")
    if caller is not None and not isinstance(caller, Mapping):
        raise LogFormatError("caller: expected an object")
    return DialogueRecord(
        id=str(record["id"]),
        exchanges=tuple(exchanges),
        terminal=record["terminal"],
        dial_duration=dur,
        caller=dict(caller) if caller is not None else None,
        executed_task=record.get("executed_task"),
        warnings=warnings,
    )


def _exchange_record(x: ExchangeLog) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in fields(ExchangeLog):
        v = getattr(x, f.name)
        if v is None:
            continue
        if f.name == "recog":
            v = " ".join(v)
        elif f.name == "task_confidences":
            v = list(v)
        elif f.name == "hand":
            v = {k: (list(w) if isinstance(w, tuple) else w)
                 for k, w in ((g.name, getattr(v, g.name)) for g in fields(HandLabels)) if w is not None}
        elif f.name in ("is_closing_prompt_only", "no_input") and not v:
            continue
        out[f.name] = v
    return out


def dialogue_record(d: DialogueRecord) -> dict[str, Any]:
    """Inverse of :func:`parse_dialogue_log` (up to token normalization)."""
    out: dict[str, Any] = {"id": d.id, "terminal": d.terminal,
                           "exchanges": [_exchange_record(x) for x in d.exchanges]}
    if d.dial_duration is not None:
        out["dial_duration"] = d.dial_duration
    if d.caller is not None:
        out["caller"] = dict(d.caller)
    if d.executed_task is not None:
        out["executed_task"] = d.executed_task
    return out


def dumps_dialogue(d: DialogueRecord) -> str:
    return json.dumps(dialogue_record(d), sort_keys=True, separators=(",", ":"))


def loads_corpus(text: str) -> list[DialogueRecord]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(parse_dialogue_log(line))
        except LogFormatError as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from None
    return out


def dumps_corpus(dialogues: Iterable[DialogueRecord]) -> str:
    return "".join(dumps_dialogue(d) + "\n" for d in dialogues)


# -- labels -------------------------------------------------------------------

def _canon(label: str) -> str:
    return label.strip().lower()


def derive_slu_label(x: ExchangeLog) -> str:
    if x.hand is None:
        raise MissingHandLabelsError(f"exchange {x.index} has no hand labels")
    silent = x.recog is not None and len(x.recog) == 0 and x.asr_duration == 0
    if x.no_input or silent or x.hand.user_modality == "nothing":
        return NO_RECOG
    human = {_canon(h) for h in x.hand.human_label}
    if x.sys_label is not None and _canon(x.sys_label) in human:
        return RCORRECT if x.digits_correct is not False else RPARTIAL
    return RMISMATCH


def derive_outcome(d: DialogueRecord) -> DialogueOutcome:
    if d.terminal == USER_HANGUP:
        raw = HANGUP
    elif d.terminal == WIZARD_TAKEOVER:
        raw = WIZARD
    else:
        if not d.has_hand_labels or d.executed_task is None:
            raise MissingHandLabelsError(f"dialogue {d.id}: task match cannot be assessed")
        requested = {_canon(h) for x in d.exchanges for h in x.hand.human_label}
        raw = TASKSUCCESS if _canon(d.executed_task) in requested else TASKFAILURE
    return DialogueOutcome(raw, collapse_outcome(raw))


# -- feature inventory --------------------------------------------------------

ASR_FEATURES = ("recog", "recog-numwords", "asr-duration", "dtmf-flag", "rg-modality", "rg-grammar",
                "spoken-digit")
SLU_SCORES = ("no-info", "salience-coverage", "inconsistency", "context-shift", "top-task",
              "nexttop-task", "top-confidence", "diff-confidence")
DM_EXCHANGE = ("sys-label", "utt-id", "prompt", "reprompt", "confirm", "subdial", "num-utts",
               "num-reprompts", "percent-reprompts", "num-confirms", "percent-confirms",
               "num-subdials", "percent-subdials")
RATE_FEATURES = ("tempo", "confpertime", "salpertime")
HAND_EXCHANGE = ("tscript", "clean-tscript", "cltscript-numwords", "human-label", "user-modality",
                 "SLU-success")
DIALOGUE_AUTO = ("dial-duration",)
DIALOGUE_HAND = ("age", "gender")
AUTO_SLU = "auto-SLU-success"

_KINDS = {
    "recog": SET_VALUED, "dtmf-flag": SYMBOLIC, "rg-modality": SYMBOLIC, "rg-grammar": SYMBOLIC,
    "spoken-digit": SYMBOLIC, "top-task": SYMBOLIC, "nexttop-task": SYMBOLIC, "sys-label": SYMBOLIC,
    "prompt": SYMBOLIC, "reprompt": SYMBOLIC, "confirm": SYMBOLIC, "subdial": SYMBOLIC,
    "tscript": SET_VALUED, "clean-tscript": SET_VALUED, "human-label": SET_VALUED,
    "user-modality": SYMBOLIC, "SLU-success": SYMBOLIC, "gender": SYMBOLIC, AUTO_SLU: SYMBOLIC,
}
_GROUPS = {**{n: "ASR" for n in ASR_FEATURES}, **{n: "SLU" for n in SLU_SCORES},
           **{n: "DM" for n in DM_EXCHANGE + DIALOGUE_AUTO}, **{n: "DERIVED" for n in RATE_FEATURES},
           **{n: "HAND" for n in HAND_EXCHANGE + DIALOGUE_HAND}, AUTO_SLU: "SLU"}
_ALLOWED = {
    "dtmf-flag": ("0", "1"), "reprompt": ("not-reprompt", "reprompt"),
    "confirm": ("confirm", "not-confirm"), "subdial": ("not-subdial", "subdial"),
    "SLU-success": SLU_CLASSES,
}


def exchange_features(task_names: Sequence[str] = DEFAULT_TASK_NAMES, hand: bool = True) -> tuple[str, ...]:
    """Base (unprefixed) per-exchange feature names in declaration order."""
    names = ASR_FEATURES + tuple(task_names) + SLU_SCORES + RATE_FEATURES + DM_EXCHANGE
    return names + HAND_EXCHANGE if hand else names


def feature_spec(base: str, name: str | None = None, slu_classes: Sequence[str] = SLU_CLASSES) -> FeatureSpec:
    kind = _KINDS.get(base, CONTINUOUS)
    group = _GROUPS.get(base, "SLU")  # unlisted names are the per-task confidences
    allowed = tuple(slu_classes) if base == AUTO_SLU else _ALLOWED.get(base)
    return FeatureSpec(name or base, kind, group, allowed, terminal=base in DIALOGUE_AUTO)


def figure7_schema(task_names: Sequence[str] = DEFAULT_TASK_NAMES, label: str = "class") -> FeatureSchema:
    """The published 53-entry inventory plus a label.

    ``num-utts`` duplicates ``utt-id`` and is not declared separately here;
    ``no-info`` and ``spoken-digit`` are not part of the published list.
    """
    extra = {"num-utts", "no-info", "spoken-digit"}
    base = [n for n in ASR_FEATURES + ("tempo",) if n not in extra]
    base += list(task_names) + [n for n in SLU_SCORES if n not in extra] + ["confpertime", "salpertime", AUTO_SLU]
    base += [n for n in DM_EXCHANGE if n not in extra] + list(DIALOGUE_AUTO)
    base += ["tscript", "human-label", "age", "gender", "user-modality", "clean-tscript",
             "cltscript-numwords", "SLU-success"]
    entries = [feature_spec(n) for n in base]
    entries.append(FeatureSpec(label, SYMBOLIC, "LABEL", SLU_CLASSES))
    return FeatureSchema(entries)


# Named feature sets over base names. Per-exchange SLU-success predictions are
# injected separately and are never part of a named set.
TASK_INDEPENDENT = (
    "recog", "recog-numwords", "asr-duration", "dtmf-flag", "rg-modality",
    "salience-coverage", "inconsistency", "context-shift", "top-confidence", "diff-confidence",
    "utt-id", "reprompt", "confirm", "subdial", "num-utts", "num-reprompts", "percent-reprompts",
    "num-confirms", "percent-confirms", "num-subdials", "percent-subdials", "dial-duration",
)


def feature_set_names(name: str, task_names: Sequence[str] = DEFAULT_TASK_NAMES) -> frozenset[str]:
    key = name.upper()
    slu = tuple(task_names) + SLU_SCORES
    dm = DM_EXCHANGE + DIALOGUE_AUTO
    hand = HAND_EXCHANGE + DIALOGUE_HAND
    sets = {
        "SLU-INPUT": ASR_FEATURES + slu + RATE_FEATURES + DM_EXCHANGE,
        "AUTO": ASR_FEATURES + slu + dm,
        "TASK-INDEPT": TASK_INDEPENDENT,
        "ASR-ONLY": ASR_FEATURES,
        "SLU-ONLY": slu,
        "DIALOGUE-ONLY": dm,
        "HAND": hand,
        "ALL": ASR_FEATURES + slu + dm + hand,
        "SLU-SUCCESS-ONLY": (),
        "BASELINE": (),
    }
    if key not in sets:
        raise KeyError(f"unknown feature set {name!r}; known: {', '.join(sorted(sets))}")
    return frozenset(sets[key])


FEATURE_SETS = ("SLU-INPUT", "AUTO", "TASK-INDEPT", "ASR-ONLY", "SLU-ONLY", "DIALOGUE-ONLY",
                "HAND", "ALL", "SLU-SUCCESS-ONLY", "BASELINE")


# -- encoding -----------------------------------------------------------------

class RateFeatures(NamedTuple):
    tempo: float
    salpertime: float
    confpertime: float
    degenerate: frozenset[str]


def _ratio(num: float | None, den: float | None) -> float | None:
    if num is None or den is None or den == 0:
        return None
    return num / den


def derive_rate_features(x: ExchangeLog) -> RateFeatures:
    """Per-second and per-word rates; zero or missing denominators give 0 and a flag."""
    words = x.recog_numwords
    if words is None and x.recog is not None:
        words = len(x.recog)
    raw = {
        "tempo": _ratio(x.asr_duration, words),
        "salpertime": _ratio(x.salience_coverage, x.asr_duration),
        "confpertime": _ratio(x.top_confidence, x.asr_duration),
    }
    bad = frozenset(k for k, v in raw.items() if v is None or not math.isfinite(v))
    vals = {k: (0.0 if k in bad else v) for k, v in raw.items()}
    return RateFeatures(vals["tempo"], vals["salpertime"], vals["confpertime"], bad)


def _onoff(flag: bool | None, word: str) -> str | None:
    if flag is None:
        return None
    return word if flag else f"not-{word}"


def encode_exchange(d: DialogueRecord, i: int, prefix: str = "", *,
                    task_names: Sequence[str] = DEFAULT_TASK_NAMES,
                    hand: bool = False) -> dict[str, Any]:
    """Feature values of exchange ``i`` (1-based), names prefixed with ``prefix``.

    Running tallies count flagged system turns among exchanges 1..i; percentages
    divide by i. Missing log fields stay missing.
    """
    if not 1 <= i <= len(d.exchanges):
        raise IndexError(f"exchange index {i} outside 1..{len(d.exchanges)}")
    if len(task_names) != N_TASKS:
        raise ValueError(f"expected {N_TASKS} task names")
    x = d.exchanges[i - 1]
    seen = d.exchanges[:i]
    v: dict[str, Any] = {}
    v["recog"] = tokenize(x.recog) if x.recog is not None else None
    v["recog-numwords"] = x.recog_numwords
    v["asr-duration"] = x.asr_duration
    v["dtmf-flag"] = None if x.dtmf_flag is None else ("1" if x.dtmf_flag else "0")
    v["rg-modality"] = x.rg_modality
    v["rg-grammar"] = x.rg_grammar
    v["spoken-digit"] = x.spoken_digit
    confs = x.task_confidences or (None,) * N_TASKS
    for name, c in zip(task_names, confs):
        v[name] = c
    v["no-info"] = x.no_info
    v["salience-coverage"] = x.salience_coverage
    v["inconsistency"] = x.inconsistency
    v["context-shift"] = x.context_shift
    v["top-task"] = x.top_task
    v["nexttop-task"] = x.nexttop_task
    v["top-confidence"] = x.top_confidence
    v["diff-confidence"] = x.diff_confidence
    rates = derive_rate_features(x)
    v["tempo"], v["confpertime"], v["salpertime"] = rates.tempo, rates.confpertime, rates.salpertime
    v["sys-label"] = x.sys_label
    v["utt-id"] = i
    v["prompt"] = x.prompt
    v["reprompt"] = _onoff(x.reprompt, "reprompt")
    v["confirm"] = _onoff(x.confirm, "confirm")
    v["subdial"] = _onoff(x.subdial, "subdial")
    v["num-utts"] = i
    for word, attr in (("reprompts", "reprompt"), ("confirms", "confirm"), ("subdials", "subdial")):
        tally = sum(1 for e in seen if getattr(e, attr))
        v[f"num-{word}"] = tally
        v[f"percent-{word}"] = tally / i
    if hand and x.hand is not None:
        h = x.hand
        v["tscript"] = tokenize(h.tscript) if h.tscript is not None else None
        v["clean-tscript"] = tokenize(h.clean_tscript) if h.clean_tscript is not None else None
        v["cltscript-numwords"] = h.cltscript_numwords
        v["human-label"] = tokenize(h.human_label)
        v["user-modality"] = h.user_modality
        v["SLU-success"] = derive_slu_label(x)
    return {prefix + k: _num(val) for k, val in v.items() if val is not None}


def _num(v: Any) -> Any:
    # bools never reach here; ints become floats so datasets are kind-uniform
    if isinstance(v, int):
        return float(v)
    return v


_PREFIX = re.compile(r"^e(\d+)-(.+)$")


def split_name(name: str) -> tuple[int | None, str]:
    """``e2-asr-duration`` -> (2, ``asr-duration``); unprefixed names give (None, name)."""
    m = _PREFIX.match(name)
    return (int(m.group(1)), m.group(2)) if m else (None, name)


@dataclass(frozen=True)
class WindowOptions:
    task_names: tuple[str, ...] = DEFAULT_TASK_NAMES
    # prompt names that announce the end of the call
    closing_prompts: tuple[str, ...] = ("closing", "goodbye", "transfer")


def window_exchanges(d: DialogueRecord, window: str) -> int:
    """How many leading exchanges a window encodes for ``d``."""
    window = window.upper()
    if window == EX1:
        return 1
    if window == EX12:
        if len(d.exchanges) >= 2 and not d.exchanges[1].is_closing_prompt_only:
            return 2
        return 1
    if window == WHOLE:
        return len(d.exchanges)
    raise ValueError(f"unknown window {window!r}")


def build_window(d: DialogueRecord, window: str, feature_set: str = "AUTO",
                 options: WindowOptions = WindowOptions(), encode=None) -> FeatureVector:
    """One dialogue-level vector; the label is the binary outcome when derivable.

    ``encode(d, i, hand)`` may supply cached per-exchange fragments.
    """
    window = window.upper()
    wanted = feature_set_names(feature_set, options.task_names)
    n = window_exchanges(d, window)
    use_hand = bool(wanted & set(HAND_EXCHANGE + DIALOGUE_HAND))
    values: dict[str, Any] = {}
    for i in range(1, n + 1):
        if encode is None:
            frag = encode_exchange(d, i, task_names=options.task_names, hand=use_hand)
        else:
            frag = encode(d, i, use_hand)
        for base, val in frag.items():
            if base not in wanted:
                continue
            if window != WHOLE and base == "prompt" and val in options.closing_prompts:
                continue
            values[f"e{i}-{base}"] = val
    if window == WHOLE and "dial-duration" in wanted and d.dial_duration is not None:
        values["dial-duration"] = d.dial_duration
    if d.caller and use_hand:
        if "age" in wanted and d.caller.get("age") is not None:
            values["age"] = float(d.caller["age"])
        if "gender" in wanted and d.caller.get("gender") is not None:
            values["gender"] = str(d.caller["gender"])
    try:
        label = derive_outcome(d).binary
    except MissingHandLabelsError:
        label = None
    return FeatureVector(values, label, d.id)


def window_schema(window: str, feature_set: str, max_exchanges: int, *,
                  inject: Sequence[str] | None = None,
                  options: WindowOptions = WindowOptions(),
                  label: str = "outcome") -> FeatureSchema:
    """Schema for :func:`build_window` output over dialogues of up to ``max_exchanges``.

    ``inject`` gives the class vocabulary of per-exchange SLU-success predictions;
    None means no such feature.
    """
    window = window.upper()
    if window not in WINDOWS:
        raise ValueError(f"unknown window {window!r}")
    wanted = feature_set_names(feature_set, options.task_names)
    n = {EX1: 1, EX12: 2, WHOLE: max_exchanges}[window]
    entries = []
    per_exchange = [b for b in exchange_features(options.task_names) if b in wanted]
    for i in range(1, max(n, 1) + 1):
        entries += [feature_spec(b, f"e{i}-{b}") for b in per_exchange]
        if inject is not None:
            entries.append(feature_spec(AUTO_SLU, f"e{i}-{AUTO_SLU}", inject))
    if window == WHOLE and "dial-duration" in wanted:
        entries.append(feature_spec("dial-duration"))
    entries += [feature_spec(b) for b in DIALOGUE_HAND if b in wanted]
    entries.append(FeatureSpec(label, SYMBOLIC, "LABEL", BINARY_OUTCOMES))
    return FeatureSchema(entries)


def exchange_schema(feature_set: str = "SLU-INPUT", *, collapse: bool = False,
                    options: WindowOptions = WindowOptions(), label: str = "slu-outcome") -> FeatureSchema:
    wanted = feature_set_names(feature_set, options.task_names)
    entries = [feature_spec(b) for b in exchange_features(options.task_names) if b in wanted]
    entries.append(FeatureSpec(label, SYMBOLIC, "LABEL", SLU_BINARY if collapse else SLU_CLASSES))
    return FeatureSchema(entries)
