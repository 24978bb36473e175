import copy
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdpkit.dialog import (
    EX1,
    EX12,
    NO_RECOG,
    PROBLEMATIC,
    RCORRECT,
    RINCORRECT,
    RMISMATCH,
    RPARTIAL,
    TASKFAILURE,
    TASKSUCCESS,
    WHOLE,
    WIZARD,
    DialogueRecord,
    ExchangeLog,
    HandLabels,
    LogFormatError,
    MissingHandLabelsError,
    build_window,
    collapse_outcome,
    collapse_slu_binary,
    derive_outcome,
    derive_rate_features,
    derive_slu_label,
    dialogue_record,
    dumps_corpus,
    encode_exchange,
    feature_set_names,
    loads_corpus,
    parse_dialogue_log,
    split_name,
    window_exchanges,
    window_schema,
)
from pdpkit.tabular import validate_example


def test_figure8_exchange_encoding(figure3):
    v = encode_exchange(figure3, 2)
    assert v["recog"] == ("a", "call", "can", "charge", "eight", "hundred", "no", "one", "t", "t")
    assert v["recog-numwords"] == 10
    assert v["asr-duration"] == 6.68
    assert v["dtmf-flag"] == "0"
    assert v["rg-modality"] == "speech-plus-touchtone"
    assert v["rg-grammar"] == "Reprompt-gram"
    assert v["task6"] == 0.81 and v["task1"] == 0.0
    assert v["no-info"] == 1.0
    assert v["top-task"] == "dial-for-me" and v["nexttop-task"] == "none"
    assert v["top-confidence"] == 0.81 and v["diff-confidence"] == 0.81
    assert v["salience-coverage"] == 0.0
    assert v["sys-label"] == "DIAL-FOR-ME"
    assert v["utt-id"] == 2 and v["num-utts"] == 2
    assert v["prompt"] == "top-reject-rep"
    assert (v["reprompt"], v["confirm"], v["subdial"]) == ("reprompt", "not-confirm", "subdial")
    assert (v["num-reprompts"], v["num-confirms"], v["num-subdials"]) == (1, 0, 1)
    assert (v["percent-reprompts"], v["percent-confirms"], v["percent-subdials"]) == (0.5, 0.0, 0.5)
    assert v["tempo"] == pytest.approx(0.668)
    assert v["confpertime"] == pytest.approx(0.81 / 6.68)
    assert v["salpertime"] == 0.0
    assert "SLU-success" not in v


def test_figure8_labels(figure3):
    assert derive_slu_label(figure3.exchanges[0]) == NO_RECOG
    assert derive_slu_label(figure3.exchanges[1]) == RMISMATCH
    # system chose dial-for-me while the caller asked for calling-card
    assert derive_slu_label(figure3.exchanges[2]) == RMISMATCH
    assert derive_slu_label(figure3.exchanges[3]) == RPARTIAL
    assert derive_outcome(figure3) == (WIZARD, PROBLEMATIC)
    hand = encode_exchange(figure3, 2, hand=True)
    assert hand["SLU-success"] == RMISMATCH
    assert hand["cltscript-numwords"] == 11
    assert hand["human-label"] == ("digitstr", "no-info")


def test_confirm_tallies(figure3):
    v = encode_exchange(figure3, 3)
    assert v["num-confirms"] == 1 and v["percent-confirms"] == pytest.approx(1 / 3)
    assert v["num-reprompts"] == 1 and v["percent-reprompts"] == pytest.approx(1 / 3)
    w = encode_exchange(figure3, 4)
    assert w["num-subdials"] == 2 and w["percent-subdials"] == 0.5


def test_encoded_values_fit_schema(figure3):
    for window in (EX1, EX12, WHOLE):
        for fs in ("AUTO", "ALL", "TASK-INDEPT", "HAND"):
            schema = window_schema(window, fs, 4)
            validate_example(schema, build_window(figure3, window, fs))


def test_unknown_fields_counted(figure3_record):
    rec = copy.deepcopy(figure3_record)
    rec["mystery"] = 1
    rec["exchanges"][0]["extra"] = "x"
    assert parse_dialogue_log(rec).warnings == 2
    assert parse_dialogue_log(figure3_record).warnings == 0


def _mutate(record, path, value):
    rec = copy.deepcopy(record)
    obj = rec
    for key in path[:-1]:
        obj = obj[key]
    if value is KeyError:
        del obj[path[-1]]
    else:
        obj[path[-1]] = value
    return rec


@pytest.mark.parametrize("path,value", [
    (("terminal",), "exploded"),
    (("id",), KeyError),
    (("exchanges",), []),
    (("exchanges", 1, "asr_duration"), -1.0),
    (("exchanges", 1, "top_confidence"), 1.5),
    (("exchanges", 1, "diff_confidence"), 0.5),
    (("exchanges", 1, "task_confidences"), [0.1, 0.2]),
    (("exchanges", 1, "reprompt"), "maybe"),
    (("exchanges", 1, "recog_numwords"), -3),
    (("exchanges", 1, "index"), 7),
    (("dial_duration",), -2.0),
])
def test_parse_errors(figure3_record, path, value):
    with pytest.raises(LogFormatError):
        parse_dialogue_log(_mutate(figure3_record, path, value))


def test_parse_malformed_text():
    with pytest.raises(LogFormatError):
        parse_dialogue_log("{not json")
    with pytest.raises(LogFormatError) as e:
        loads_corpus('{"id": "a", "terminal": "completed", "exchanges": [{}]}\n[1]\n')
    assert "line 2" in str(e.value)


def test_corpus_round_trip(figure3):
    text = dumps_corpus([figure3, figure3])
    back = loads_corpus(text)
    assert back == [figure3, figure3]
    assert dumps_corpus(back) == text
    assert parse_dialogue_log(json.dumps(dialogue_record(figure3))) == figure3


def test_recog_spoken_order_kept(figure3):
    assert figure3.exchanges[1].recog[:3] == ("can", "charge", "no")


def test_slu_labels_from_hand_annotation():
    hand = HandLabels(human_label=("collect",), user_modality="speech")
    x = ExchangeLog(1, recog=("collect", "call"), asr_duration=1.0, sys_label="COLLECT", hand=hand)
    assert derive_slu_label(x) == RCORRECT
    assert derive_slu_label(ExchangeLog(1, sys_label="THIRD-NUMBER", hand=hand, asr_duration=1.0)) == RMISMATCH
    assert derive_slu_label(ExchangeLog(1, sys_label="COLLECT", hand=hand, digits_correct=False)) == RPARTIAL
    assert derive_slu_label(ExchangeLog(1, recog=(), asr_duration=0.0, hand=hand)) == NO_RECOG
    with pytest.raises(MissingHandLabelsError):
        derive_slu_label(ExchangeLog(1, sys_label="COLLECT"))


def test_binary_collapses():
    assert collapse_slu_binary(RCORRECT) == RCORRECT
    for c in (RPARTIAL, RMISMATCH, NO_RECOG):
        assert collapse_slu_binary(c) == RINCORRECT
    assert collapse_outcome(TASKSUCCESS) == TASKSUCCESS
    for c in (TASKFAILURE, WIZARD, "HANGUP"):
        assert collapse_outcome(c) == PROBLEMATIC
    with pytest.raises(ValueError):
        collapse_outcome("SUCCESS-ISH")
    with pytest.raises(ValueError):
        collapse_slu_binary("RMAYBE")


def _completed(executed, labels=("collect",)):
    hand = HandLabels(human_label=labels, user_modality="speech")
    return DialogueRecord("c", (ExchangeLog(1, sys_label="COLLECT", hand=hand),), "completed", executed_task=executed)


def test_terminal_outcomes():
    assert derive_outcome(_completed("collect")).raw == TASKSUCCESS
    assert derive_outcome(_completed("third-number")) == (TASKFAILURE, PROBLEMATIC)
    hung = DialogueRecord("h", (ExchangeLog(1),), "user-hangup")
    assert derive_outcome(hung) == ("HANGUP", PROBLEMATIC)
    with pytest.raises(MissingHandLabelsError):
        derive_outcome(DialogueRecord("u", (ExchangeLog(1),), "completed", executed_task="collect"))


def test_windows(figure3):
    assert [window_exchanges(figure3, w) for w in (EX1, EX12, WHOLE)] == [1, 2, 4]
    ex1 = build_window(figure3, EX1)
    assert all(split_name(k)[0] == 1 for k in ex1.values)
    ex12 = build_window(figure3, EX12)
    assert {split_name(k)[0] for k in ex12.values} == {1, 2}
    whole = build_window(figure3, WHOLE)
    assert whole.values["dial-duration"] == 38.5
    assert "e3-confirm" in whole.values and "e4-sys-label" in whole.values
    assert "dial-duration" not in ex12.values
    assert ex12.label == PROBLEMATIC


def test_closing_only_second_exchange_excluded():
    closing = DialogueRecord("z", (ExchangeLog(1, prompt="greeting", asr_duration=1.0),
                                   ExchangeLog(2, prompt="closing", asr_duration=0.5, is_closing_prompt_only=True)),
                             "user-hangup")
    assert window_exchanges(closing, EX12) == 1
    vec = build_window(closing, EX12)
    assert not any(k.startswith("e2-") for k in vec.values)


def test_one_exchange_dialogue_windows():
    d = DialogueRecord("one", (ExchangeLog(1, asr_duration=2.0),), "user-hangup", dial_duration=3.0)
    assert build_window(d, EX12).values == build_window(d, EX1).values


def test_hand_features_only_in_hand_sets(figure3):
    auto = build_window(figure3, WHOLE, "AUTO")
    assert not any(split_name(k)[1] in ("human-label", "SLU-success", "tscript") for k in auto.values)
    allf = build_window(figure3, WHOLE, "ALL")
    assert "e2-human-label" in allf.values
    assert allf.values["e2-SLU-success"] == RMISMATCH
    assert not any("auto-SLU-success" in k for k in allf.values)


def test_rates_only_in_slu_input():
    assert {"tempo", "confpertime", "salpertime"} <= feature_set_names("SLU-INPUT")
    for fs in ("AUTO", "ALL", "TASK-INDEPT"):
        assert not {"tempo", "confpertime", "salpertime"} & feature_set_names(fs)
    with pytest.raises(KeyError):
        feature_set_names("MOSTLY")


def test_rate_degeneracy():
    r = derive_rate_features(ExchangeLog(1, recog=(), recog_numwords=0, asr_duration=0.0,
                                         top_confidence=0.0, salience_coverage=0.0))
    assert (r.tempo, r.salpertime, r.confpertime) == (0.0, 0.0, 0.0)
    assert r.degenerate == {"tempo", "salpertime", "confpertime"}
    ok = derive_rate_features(ExchangeLog(1, recog_numwords=4, asr_duration=2.0, top_confidence=0.5,
                                          salience_coverage=0.25))
    assert ok == (0.5, 0.125, 0.25, frozenset())


def test_exchange_index_bounds(figure3):
    with pytest.raises(IndexError):
        encode_exchange(figure3, 5)
    with pytest.raises(IndexError):
        encode_exchange(figure3, 0)


flags = st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans()), min_size=1, max_size=8)


@given(flags)
def test_running_tallies_property(seq):
    d = DialogueRecord("t", tuple(ExchangeLog(i + 1, reprompt=a, confirm=b, subdial=c)
                                  for i, (a, b, c) in enumerate(seq)), "user-hangup")
    for i in range(1, len(seq) + 1):
        v = encode_exchange(d, i)
        for k, word in enumerate(("reprompts", "confirms", "subdials")):
            count = sum(t[k] for t in seq[:i])
            assert v[f"num-{word}"] == count
            assert v[f"percent-{word}"] == pytest.approx(count / i)
            assert 0.0 <= v[f"percent-{word}"] <= 1.0


@given(st.integers(1, 12))
def test_window_monotone_exchange_counts(n):
    d = DialogueRecord("w", tuple(ExchangeLog(i + 1, asr_duration=1.0) for i in range(n)), "user-hangup")
    counts = [window_exchanges(d, w) for w in (EX1, EX12, WHOLE)]
    assert counts == sorted(counts)
    assert counts[-1] == n
