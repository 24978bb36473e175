"""Synthetic dialogue corpora with controllable label structure.

Each exchange carries a true SLU outcome (fixed by its hand labels) and a
*feature class* whose distribution its logged features are drawn from. With
probability ``signal_strength`` the two agree; otherwise the feature class is
drawn from the base rates. Dialogues are likewise *coupled* with probability
``signal_strength``: a coupled problematic dialogue holds at least one
misunderstanding (RMISMATCH or RPARTIAL-MATCH), a coupled successful one holds
none. At strength 1 the SLU outcome is a deterministic function of the logged
features (see :func:`feature_label`) and the binary outcome is a deterministic
function of the exchange outcomes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .dialog import (
    COMPLETED,
    NO_RECOG,
    OUTCOMES,
    RCORRECT,
    RMISMATCH,
    RPARTIAL,
    SLU_CLASSES,
    TASKFAILURE,
    TASKSUCCESS,
    USER_HANGUP,
    WIZARD_TAKEOVER,
    HANGUP,
    WIZARD,
    DialogueRecord,
    ExchangeLog,
    HandLabels,
    N_TASKS,
)

# exchange-level class counts of the reference corpus, in SLU_CLASSES order
REFERENCE_SLU_COUNTS = (7481, 109, 4197, 8943)
REFERENCE_EXCHANGES = 20730
REFERENCE_DIALOGUES = 4692

TASK_LABELS = (
    "dial-for-me", "calling-card", "collect", "third-number", "bill-home", "rate", "credit",
    "directory", "billing", "person-to-person", "area-code", "time", "how-to-dial", "explain",
    "operator",
)
_VOCAB = (
    "i", "want", "to", "make", "a", "call", "my", "the", "please", "card", "number", "collect",
    "charge", "it", "on", "yes", "no", "help", "bill", "phone", "home", "wrong", "area", "code",
    "from", "one", "eight", "hundred", "credit", "operator", "person", "need", "can", "this",
    "that", "is", "what", "how", "much", "rate",
)
MISMATCH_RATIO = 0.12   # confidence per second below which understanding fails
SALIENCE_RATIO = 0.06   # salient coverage per second below which understanding fails
TEMPO_LIMIT = 0.44      # seconds per word below which hurried speech is misread
DIGIT_WORDS = 8         # short digit-bearing utterances lose their digit strings

_LENGTH_PMF = {2: 0.23, 3: 0.03, 4: 0.03, 5: 0.68}
_TAIL = tuple(range(6, 16))  # the remaining 3% spread over longer calls


class GeneratorConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n_dialogues: int = REFERENCE_DIALOGUES
    seed: int = 0
    signal_strength: float = 0.9
    slu_mix: tuple[float, ...] = tuple(c / REFERENCE_EXCHANGES for c in REFERENCE_SLU_COUNTS)
    # TASKSUCCESS, TASKFAILURE, WIZARD, HANGUP
    outcome_mix: tuple[float, ...] = (0.671, 0.120, 0.125, 0.084)
    asr_duration_spread: float = 1.0
    confidence_overlap: float = 0.8
    hangup_propensity: float = 0.5
    total_exchanges: int | None = None
    p_close: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "slu_mix", tuple(float(x) for x in self.slu_mix))
        object.__setattr__(self, "outcome_mix", tuple(float(x) for x in self.outcome_mix))
        if self.n_dialogues < 1:
            raise GeneratorConfigError("n_dialogues must be positive")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise GeneratorConfigError("signal_strength must lie in [0, 1]")
        for name, mix in (("slu_mix", self.slu_mix), ("outcome_mix", self.outcome_mix)):
            if len(mix) != 4 or any(x < 0 for x in mix) or not math.isclose(sum(mix), 1.0, abs_tol=1e-6):
                raise GeneratorConfigError(f"{name} must be 4 non-negative proportions summing to 1")
        for name in ("confidence_overlap", "hangup_propensity", "p_close"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise GeneratorConfigError(f"{name} must lie in [0, 1]")
        if self.asr_duration_spread < 0:
            raise GeneratorConfigError("asr_duration_spread must be non-negative")
        if self.total_exchanges is not None and not 2 * self.n_dialogues <= self.total_exchanges <= 15 * self.n_dialogues:
            raise GeneratorConfigError("total_exchanges must allow 2..15 exchanges per dialogue")

    def to_json(self) -> dict:
        d = asdict(self)
        d["slu_mix"] = list(self.slu_mix)
        d["outcome_mix"] = list(self.outcome_mix)
        return d

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


def quota(total: int, mix: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``total`` items to proportions ``mix``."""
    raw = [total * m for m in mix]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(mix)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def feature_label(numwords: int, asr_duration: float, top_confidence: float, spoken_digit: str,
                  salience_coverage: float = 1.0) -> str:
    """The SLU outcome implied by logged features when features carry full signal."""
    if numwords == 0:
        return NO_RECOG
    if (asr_duration <= 0 or top_confidence / asr_duration < MISMATCH_RATIO
            or salience_coverage / asr_duration < SALIENCE_RATIO
            or asr_duration / numwords < TEMPO_LIMIT):
        return RMISMATCH
    if spoken_digit == "1" and numwords <= DIGIT_WORDS:
        return RPARTIAL
    return RCORRECT


def _lengths(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    support = list(_LENGTH_PMF) + list(_TAIL)
    tail_mass = 1.0 - sum(_LENGTH_PMF.values())
    probs = np.array(list(_LENGTH_PMF.values()) + [tail_mass / len(_TAIL)] * len(_TAIL))
    lengths = rng.choice(support, size=cfg.n_dialogues, p=probs / probs.sum())
    if cfg.total_exchanges is not None:
        # nudge mid-length calls (3..5) until the total matches exactly
        diff = cfg.total_exchanges - int(lengths.sum())
        while diff != 0:
            step = 1 if diff > 0 else -1
            ok = np.flatnonzero((lengths >= 3) & (lengths < 5)) if step > 0 else np.flatnonzero((lengths > 3) & (lengths <= 5))
            if len(ok) == 0:
                ok = np.flatnonzero(lengths < 15) if step > 0 else np.flatnonzero(lengths > 2)
            pick = rng.choice(ok, size=min(abs(diff), len(ok)), replace=False)
            lengths[pick] += step
            diff = cfg.total_exchanges - int(lengths.sum())
    return lengths.astype(np.int64)


def _features(cls: np.ndarray, cfg: GeneratorConfig, rng: np.random.Generator):
    """Draw (numwords, duration, confidence, spoken_digit, salience) whose implied label equals ``cls``.

    Vectorized rejection sampling against :func:`feature_label`.
    """
    n = len(cls)
    words = np.zeros(n, dtype=np.int64)
    dur = np.zeros(n)
    conf = np.zeros(n)
    digit = np.zeros(n, dtype=np.int64)
    sal = np.zeros(n)
    pending = np.flatnonzero(cls != SLU_CLASSES.index(NO_RECOG))
    spread = cfg.asr_duration_spread
    for _ in range(10_000):
        if len(pending) == 0:
            break
        k = len(pending)
        w = np.minimum(1 + rng.geometric(1 / 7.0, size=k), 30)
        tempo = np.exp(rng.normal(math.log(0.45), 0.35 * max(spread, 1e-6), size=k))
        d = np.round(w * tempo + rng.uniform(0.2, 1.0, size=k) * spread, 2)
        d = np.maximum(d, 0.05)
        target = cls[pending]
        shared = rng.random(k) < cfg.confidence_overlap
        a = np.where(shared, 4.0, np.where(target == SLU_CLASSES.index(RMISMATCH), 2.0, 5.0))
        b = np.where(shared, 2.0, np.where(target == SLU_CLASSES.index(RMISMATCH), 3.0, 2.0))
        c = np.clip(np.round(rng.beta(a, b), 3), 0.05, 0.999)
        g = np.clip(np.round(rng.beta(3.0, 2.0, size=k), 3), 0.0, 1.0)
        sd = (rng.random(k) < np.where(target == SLU_CLASSES.index(RPARTIAL), 0.9, 0.15)).astype(np.int64)
        implied = np.where(
            (c / d < MISMATCH_RATIO) | (g / d < SALIENCE_RATIO) | (d / w < TEMPO_LIMIT), SLU_CLASSES.index(RMISMATCH),
            np.where((sd == 1) & (w <= DIGIT_WORDS), SLU_CLASSES.index(RPARTIAL), SLU_CLASSES.index(RCORRECT)),
        )
        ok = implied == target
        idx = pending[ok]
        words[idx], dur[idx], conf[idx], digit[idx], sal[idx] = w[ok], d[ok], c[ok], sd[ok], g[ok]
        pending = pending[~ok]
    if len(pending):
        raise RuntimeError("feature sampler failed to converge")
    return words, dur, conf, digit, sal


def generate(cfg: GeneratorConfig) -> list[DialogueRecord]:
    rng = np.random.default_rng(cfg.seed)
    s = cfg.signal_strength
    n = cfg.n_dialogues
    lengths = _lengths(cfg, rng)
    total = int(lengths.sum())
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    dlg = np.repeat(np.arange(n), lengths)
    pos = np.arange(total) - starts[dlg] + 1  # 1-based exchange index

    # dialogue outcomes by exact quota, shuffled
    outcome = rng.permutation(np.repeat(np.arange(4), quota(n, cfg.outcome_mix)))
    success = outcome == OUTCOMES.index(TASKSUCCESS)
    completed = success | (outcome == OUTCOMES.index(TASKFAILURE))
    coupled = rng.random(n) < s

    # calls that end on a closing prompt; only coupled calls tie this to the outcome
    closes = np.where(coupled, completed, rng.random(n) < 0.75)
    closing_only = closes & (lengths == 2) & (rng.random(n) < cfg.p_close)
    is_closing_ex = np.zeros(total, dtype=bool)
    is_closing_ex[starts[closing_only] + 1] = True

    # exchange SLU outcomes by exact quota
    counts = quota(total, cfg.slu_mix)
    c_ok, c_part, c_mis, c_none = (SLU_CLASSES.index(x) for x in SLU_CLASSES)
    label = np.full(total, -1, dtype=np.int64)
    label[is_closing_ex] = c_none
    n_bad = counts[c_part] + counts[c_mis]
    bad_slots: list[int] = []
    # each coupled problematic call gets one misunderstanding, placed early more often than late
    for di in np.flatnonzero(coupled & ~success):
        cand = [p for p in range(1, lengths[di] + 1) if not is_closing_ex[starts[di] + p - 1]]
        wts = np.array([0.3 if p == 1 else 0.45 if p == 2 else 0.25 / max(len(cand) - 2, 1) for p in cand])
        p = int(rng.choice(cand, p=wts / wts.sum()))
        # callers who hang up often do so right after being misunderstood
        if outcome[di] == OUTCOMES.index(HANGUP) and rng.random() < cfg.hangup_propensity:
            p = cand[-1]
        bad_slots.append(int(starts[di] + p - 1))
    bad_slots = bad_slots[:n_bad]
    # surplus misunderstandings fill coupled problematic calls first, then uncoupled ones
    open_slots = np.setdiff1d(np.flatnonzero(~is_closing_ex & ~(coupled & success)[dlg]), bad_slots)
    first = open_slots[(coupled & ~success)[dlg[open_slots]]]
    rest = open_slots[~(coupled & ~success)[dlg[open_slots]]]
    want = max(n_bad - len(bad_slots), 0)
    extra = rng.choice(first, size=min(want, len(first)), replace=False)
    if want > len(first):
        extra = np.concatenate([extra, rng.choice(rest, size=min(want - len(first), len(rest)), replace=False)])
    bad = np.concatenate([np.array(bad_slots, dtype=np.int64), np.sort(extra)])
    bad = rng.permutation(bad)
    label[bad[: counts[c_part]]] = c_part
    label[bad[counts[c_part]:]] = c_mis
    # every call holds at least one understood turn, so its task is on record
    for di in np.flatnonzero(np.bincount(dlg[bad], minlength=n) == 0):
        open_ = np.flatnonzero(label[starts[di]: starts[di] + lengths[di]] < 0)
        if len(open_):
            label[starts[di] + int(rng.choice(open_))] = c_ok
    free = np.flatnonzero(label < 0)
    n_none = max(counts[c_none] - int(is_closing_ex.sum()), 0)
    none_slots = rng.choice(free, size=min(n_none, len(free)), replace=False)
    label[none_slots] = c_none
    label[label < 0] = c_ok

    # feature classes: the true outcome with probability s, else a base-rate draw
    base = np.array(cfg.slu_mix) / sum(cfg.slu_mix)
    fclass = np.where(rng.random(total) < s, label, rng.choice(4, size=total, p=base))
    fclass[is_closing_ex] = c_none
    words, dur, conf, digit, sal = _features(fclass, cfg, rng)
    # heard-but-empty turns keep a positive duration so their true outcome survives
    heard = (fclass == c_none) & (label != c_none) & ~is_closing_ex
    dur[heard] = np.round(rng.uniform(0.04, 1.0, size=int(heard.sum())), 2)

    requested = rng.integers(0, N_TASKS, size=n)
    rows = _exchange_rows(cfg, rng, label, fclass, words, dur, conf, digit, sal, dlg, pos,
                          requested, is_closing_ex, closes, lengths)
    out = []
    for di in range(n):
        exs = tuple(rows[starts[di]: starts[di] + lengths[di]])
        oc = OUTCOMES[outcome[di]]
        terminal = COMPLETED if oc in (TASKSUCCESS, TASKFAILURE) else USER_HANGUP if oc == HANGUP else WIZARD_TAKEOVER
        task = TASK_LABELS[requested[di]]
        if oc == TASKFAILURE:
            executed = TASK_LABELS[(requested[di] + 1 + rng.integers(0, N_TASKS - 1)) % N_TASKS]
        elif oc == TASKSUCCESS:
            executed = task
        else:
            executed = None
        prompt_time = float(np.round(rng.uniform(2.0, 4.0, size=len(exs)).sum(), 2))
        # a human agent who takes over a call adds their own talk time
        agent = float(np.round(rng.uniform(20.0, 90.0), 2)) if oc == WIZARD and coupled[di] else 0.0
        dial = round(sum(x.asr_duration or 0.0 for x in exs) + prompt_time + agent, 2)
        caller = {"age": int(rng.integers(18, 80)), "gender": "female" if rng.random() < 0.5 else "male"}
        out.append(DialogueRecord(f"d{di:05d}", exs, terminal, dial, caller, executed))
    return out


def _exchange_rows(cfg, rng, label, fclass, words, dur, conf, digit, sal, dlg, pos,
                   requested, is_closing_ex, closes, lengths) -> list[ExchangeLog]:
    total = len(label)
    c_ok, c_part, c_mis, c_none = range(4)
    # confidences of the runner-up task and the remaining SLU scores
    runner = np.round(conf * rng.uniform(0.0, 0.9, size=total), 3)
    inconsistency = np.round(rng.beta(1, 5, size=total), 3)
    context = np.round(rng.beta(1, 8, size=total), 3)
    offs = rng.integers(1, N_TASKS, size=(total, 2))
    vocab_draw = rng.integers(0, len(_VOCAB), size=(total, 30))
    dtmf = (digit == 1) & (rng.random(total) < 0.2)
    touch = rng.random(total) < 0.3
    rows: list[ExchangeLog] = []
    prev_empty = prev_low = prev_mid = False
    for j in range(total):
        i = int(pos[j])
        last = i == lengths[dlg[j]]
        req = int(requested[dlg[j]])
        lab = int(label[j])
        # the prompt reacts to what the system observed on the previous turn
        if i == 1:
            prompt, rep, con, sub, grammar = "greeting", False, False, False, "Toplevel-gram"
        elif last and closes[dlg[j]]:
            prompt, rep, con, sub, grammar = "closing", False, False, False, "Closing-gram"
        elif prev_empty:
            prompt, rep, con, sub, grammar = "top-reject-rep", True, False, True, "Reprompt-gram"
        elif prev_low:
            prompt, rep, con, sub, grammar = "reprompt", True, False, False, "Reprompt-gram"
        elif prev_mid:
            prompt, rep, con, sub, grammar = "confirm-task", False, True, False, "Confirm-gram"
        else:
            prompt, rep, con, sub, grammar = "info-request", False, False, True, "Billmethod-gram"
        if is_closing_ex[j]:
            rows.append(ExchangeLog(
                index=i, prompt="closing", reprompt=False, confirm=False, subdial=False,
                recog=(), recog_numwords=0, asr_duration=0.0, dtmf_flag=False,
                rg_modality="speech", rg_grammar="Closing-gram",
                task_confidences=(0.0,) * N_TASKS, no_info=1.0, top_task="none", nexttop_task="none",
                top_confidence=0.0, diff_confidence=0.0, salience_coverage=0.0, inconsistency=0.0,
                context_shift=0.0, sys_label="NONE", spoken_digit="0",
                hand=HandLabels("", "", 0, ("no-info",), "nothing"),
                digits_correct=True, is_closing_prompt_only=True,
            ))
            prev_empty, prev_low, prev_mid = True, False, False
            continue
        w = int(words[j])
        toks = tuple(_VOCAB[k] for k in vocab_draw[j, :w])
        if w:
            top = req if lab != c_mis else (req + int(offs[j, 0])) % N_TASKS
            nxt = (top + int(offs[j, 1])) % N_TASKS
            if nxt == top:
                nxt = (top + 1) % N_TASKS
            tc = [0.0] * N_TASKS
            tc[top] = float(conf[j])
            tc[nxt] = float(runner[j])
            top_c, diff = float(conf[j]), round(float(conf[j] - runner[j]), 3)
            no_info = round(max(0.0, 1.0 - top_c), 3)
            top_name, next_name = TASK_LABELS[top], TASK_LABELS[nxt]
            sc, inc, ctx = float(sal[j]), float(inconsistency[j]), float(context[j])
        else:
            top = req if lab != c_mis else (req + int(offs[j, 0])) % N_TASKS
            tc = [0.0] * N_TASKS
            top_c = diff = sc = inc = ctx = 0.0
            no_info = 1.0
            top_name = next_name = "none"
        digits = "digitstr" if digit[j] else None
        human = tuple(x for x in (TASK_LABELS[req], digits) if x) if lab != c_none else ("no-info",)
        modality = "nothing" if lab == c_none else ("touchtone" if dtmf[j] else "speech")
        clean = " ".join(toks)
        rows.append(ExchangeLog(
            index=i, prompt=prompt, reprompt=rep, confirm=con, subdial=sub,
            recog=toks, recog_numwords=w, asr_duration=float(dur[j]), dtmf_flag=bool(dtmf[j]),
            rg_modality="speech-plus-touchtone" if touch[j] else "speech", rg_grammar=grammar,
            task_confidences=tuple(tc), no_info=no_info, top_task=top_name, nexttop_task=next_name,
            top_confidence=top_c, diff_confidence=diff, salience_coverage=sc, inconsistency=inc,
            context_shift=ctx, sys_label=TASK_LABELS[top].upper(), spoken_digit=str(int(digit[j])),
            hand=HandLabels(clean, clean, w, human, modality),
            digits_correct=bool(lab != c_part), no_input=bool(lab == c_none and w == 0 and dur[j] == 0),
        ))
        prev_empty = w == 0
        prev_low = not prev_empty and top_c < 0.5
        prev_mid = not prev_empty and 0.5 <= top_c < 0.8
    return rows
