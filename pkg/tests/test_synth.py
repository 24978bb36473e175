from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from pdpkit.dialog import (
    PROBLEMATIC,
    RMISMATCH,
    RPARTIAL,
    TASKSUCCESS,
    derive_outcome,
    derive_slu_label,
    dumps_corpus,
    loads_corpus,
)
from pdpkit.metrics import majority_baseline
from pdpkit.synth import GeneratorConfig, GeneratorConfigError, feature_label, generate, quota


@pytest.fixture(scope="module")
def full_signal():
    return generate(GeneratorConfig(seed=1, signal_strength=1.0, total_exchanges=oracles.TOTAL_EXCHANGES))


def test_reference_proportions(full_signal):
    assert len(full_signal) == oracles.TOTAL_DIALOGUES
    labels = Counter(derive_slu_label(x) for d in full_signal for x in d.exchanges)
    assert dict(labels) == oracles.SLU_COUNTS
    outcomes = [derive_outcome(d).binary for d in full_signal]
    cls, share = majority_baseline(outcomes)
    assert cls == TASKSUCCESS
    assert abs(100 * share - oracles.TASKSUCCESS_SHARE) <= 0.05


def test_default_outcome_share_within_one_point():
    corpus = generate(GeneratorConfig(seed=4))
    share = sum(derive_outcome(d).binary == TASKSUCCESS for d in corpus) / len(corpus)
    assert abs(100 * share - oracles.TASKSUCCESS_SHARE) <= 1.0


def test_full_signal_labels_follow_features(full_signal):
    for d in full_signal:
        for x in d.exchanges:
            words = x.recog_numwords if x.recog_numwords is not None else len(x.recog or ())
            want = feature_label(words, x.asr_duration, x.top_confidence, x.spoken_digit, x.salience_coverage)
            assert derive_slu_label(x) == want


def test_full_signal_outcome_follows_slu_labels(full_signal):
    for d in full_signal:
        # silent turns are not misunderstandings; only wrong or partial readings count
        bad = any(derive_slu_label(x) in (RMISMATCH, RPARTIAL) for x in d.exchanges)
        assert (derive_outcome(d).binary == PROBLEMATIC) == bad


def test_deterministic_per_seed():
    cfg = GeneratorConfig(n_dialogues=200, seed=9)
    a, b = dumps_corpus(generate(cfg)), dumps_corpus(generate(cfg))
    assert a == b
    assert dumps_corpus(loads_corpus(a)) == a
    assert dumps_corpus(generate(GeneratorConfig(n_dialogues=200, seed=10))) != a


@pytest.mark.parametrize("kw", [
    {"signal_strength": 1.5},
    {"n_dialogues": 0},
    {"slu_mix": (0.5, 0.5, 0.5, 0.0)},
    {"outcome_mix": (1.0, 0.0, 0.0)},
    {"confidence_overlap": -0.1},
    {"asr_duration_spread": -1.0},
    {"n_dialogues": 10, "total_exchanges": 5},
])
def test_invalid_configs(kw):
    with pytest.raises(GeneratorConfigError):
        GeneratorConfig(**kw)


def test_every_dialogue_is_parseable_and_labelled(small_corpus):
    for d in small_corpus:
        assert d.has_hand_labels
        assert 2 <= len(d.exchanges) <= 15
        derive_outcome(d)


@given(st.integers(0, 10_000), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6))
def test_quota_sums_and_tracks_proportions(total, weights):
    s = sum(weights)
    if s == 0:
        return
    mix = [w / s for w in weights]
    counts = quota(total, mix)
    assert sum(counts) == total
    assert all(abs(c - total * m) < 1.0 + 1e-9 for c, m in zip(counts, mix))
