import dataclasses

import pytest

import oracles
from pdpkit.cascade import (
    AUTO,
    HLT,
    NONE,
    ORACLE,
    ExperimentConfig,
    ModeResourceError,
    StackedCorpus,
    assemble_pdp_dataset,
    balanced_subsample,
    dialogue_of,
    exchange_dataset,
    jackknife_stack,
    run_grid,
    split_corpus,
    table5_grid,
)
from pdpkit.dialog import (
    EX1,
    EX12,
    WHOLE,
    DialogueRecord,
    ExchangeLog,
    HandLabels,
    derive_outcome,
    derive_slu_label,
)
from pdpkit.synth import GeneratorConfig, generate


@pytest.fixture(scope="module")
def reference_corpus():
    return generate(GeneratorConfig(seed=1, signal_strength=1.0, total_exchanges=oracles.TOTAL_EXCHANGES))


@pytest.fixture(scope="module")
def small_stack(small_corpus):
    split = split_corpus(small_corpus, seed=2)
    return split, jackknife_stack(exchange_dataset(split.train), folds=4, seed=2)


def test_default_split_sizes(reference_corpus):
    split = split_corpus(reference_corpus, seed=0)
    assert (len(split.test), len(split.train)) == (oracles.TEST_DIALOGUES, 3825)
    assert not {d.id for d in split.test} & {d.id for d in split.train}
    assert len(split.train_exchanges) + len(split.test_exchanges) == oracles.TOTAL_EXCHANGES
    assert len(exchange_dataset(split.train)) + len(exchange_dataset(split.test)) == oracles.TOTAL_EXCHANGES


def test_split_errors():
    with pytest.raises(ValueError):
        split_corpus([])
    d = DialogueRecord("a", (ExchangeLog(1),), "user-hangup")
    with pytest.raises(ValueError):
        split_corpus([d, d], test_fraction=1.0)


def test_stacking_full_signal_recovers_labels(reference_corpus):
    split = split_corpus(reference_corpus, seed=0)
    train_ex = exchange_dataset(split.train)
    stacked = jackknife_stack(train_ex, folds=4)
    assert set(stacked.values) == {x.id for x in train_ex}
    assert stacked.audit() == []
    agree = sum(stacked.values[x.id] == x.label for x in train_ex) / len(train_ex)
    assert agree >= 0.95


def test_stacking_provenance(small_stack):
    split, stacked = small_stack
    for ex_id in stacked.values:
        k, trained_on = stacked.provenance(ex_id)
        assert dialogue_of(ex_id) not in trained_on
        assert stacked.fold_of[dialogue_of(ex_id)] == k
    # every training dialogue is held out by exactly one fold
    for d in split.train:
        assert sum(d.id not in s for s in stacked.fold_train) == 1


def test_audit_catches_leaks(small_stack):
    _, stacked = small_stack
    leaky = dataclasses.replace(stacked, fold_train=tuple(s | set(stacked.fold_of) for s in stacked.fold_train))
    assert len(leaky.audit()) == len(stacked.values)
    assert stacked.audit(["nowhere#1"]) == ["nowhere#1"]


def test_stacked_record_round_trip(small_stack):
    _, stacked = small_stack
    back = StackedCorpus.from_json(stacked.to_json())
    assert back.values == stacked.values and back.fold_train == stacked.fold_train
    assert back.model.dumps() == stacked.model.dumps()


def test_stacking_errors(small_stack):
    split, _ = small_stack
    data = exchange_dataset(split.train[:3])
    with pytest.raises(ValueError):
        jackknife_stack(data, folds=1)
    with pytest.raises(ValueError):
        jackknife_stack(data, folds=4)


def _names(data):
    return {k for x in data for k in x.values}


def test_mode_feature_names(small_stack):
    split, stacked = small_stack
    train = split.train
    none = assemble_pdp_dataset(train, ExperimentConfig(EX12, "AUTO", NONE))
    assert not any("SLU-success" in k for k in _names(none))
    auto = assemble_pdp_dataset(train, ExperimentConfig(EX12, "AUTO", AUTO), stacked)
    oracle = assemble_pdp_dataset(train, ExperimentConfig(EX12, "AUTO", ORACLE), stacked)
    assert _names(auto) == _names(oracle)
    assert auto.schema.names == oracle.schema.names
    assert {k for k in _names(auto) if "SLU-success" in k} == {"e1-auto-SLU-success", "e2-auto-SLU-success"}
    for x, y in zip(auto, oracle):
        assert {k: v for k, v in x.values.items() if "SLU" not in k} == {k: v for k, v in y.values.items() if "SLU" not in k}
        assert x.label == y.label == derive_outcome(next(d for d in train if d.id == x.id)).binary
    for x in oracle:
        d = next(d for d in train if d.id == x.id)
        assert x.values["e1-auto-SLU-success"] == derive_slu_label(d.exchanges[0])


def test_auto_test_side_uses_full_model(small_stack):
    split, stacked = small_stack
    cfg = ExperimentConfig(EX1, "AUTO", AUTO)
    te = assemble_pdp_dataset(split.test, cfg, stacked, side="test")
    from pdpkit.ripper import predict_dataset
    ex = exchange_dataset(split.test)
    preds = {x.id: p.label for x, p in zip(ex, predict_dataset(stacked.model, ex))}
    for x in te:
        assert x.values["e1-auto-SLU-success"] == preds[f"{x.id}#1"]


def _strip(d):
    return dataclasses.replace(d, exchanges=tuple(dataclasses.replace(x, hand=None) for x in d.exchanges))


def test_mode_resource_errors(small_stack):
    split, stacked = small_stack
    unlabelled = [_strip(d) for d in split.train[:5]]
    with pytest.raises(ModeResourceError):
        assemble_pdp_dataset(unlabelled, ExperimentConfig(EX12, "AUTO", HLT), stacked)
    with pytest.raises(ModeResourceError):
        assemble_pdp_dataset(unlabelled, ExperimentConfig(EX12, "AUTO", ORACLE), stacked, side="test")
    with pytest.raises(ModeResourceError):
        assemble_pdp_dataset(split.train, ExperimentConfig(EX12, "AUTO", AUTO))
    # HLT only needs predictions at test time
    te = assemble_pdp_dataset([_strip(d) for d in split.test[:5]], ExperimentConfig(EX12, "AUTO", HLT),
                              stacked, side="test")
    assert len(te) == 5


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(window="EX3")
    with pytest.raises(ValueError):
        ExperimentConfig(slu_mode="psychic")
    with pytest.raises(KeyError):
        ExperimentConfig(feature_set="NOPE")
    cfg = ExperimentConfig("ex12", "auto", "AUTO")
    assert (cfg.window, cfg.feature_set, cfg.slu_mode) == (EX12, "AUTO", AUTO)
    assert ExperimentConfig.from_json(cfg.to_json()) == dataclasses.replace(cfg, name=cfg.row)


def test_table5_grid_shape():
    grid = table5_grid()
    assert len(grid) == 21
    assert {c.window for c in grid} == {EX1, EX12, WHOLE}
    assert grid[0].feature_set == "BASELINE"


def test_run_grid_ttests(small_corpus):
    grid = [ExperimentConfig(EX12, "AUTO", NONE), ExperimentConfig(EX12, "AUTO", AUTO)]
    run = run_grid(small_corpus, grid, seed=3)
    n_test = len(run.split.test)
    ref, cmp = run.reports
    assert ref.ttests == ()
    (tt,) = cmp.ttests
    assert tt.reference == ref.name and tt.df == n_test - 1
    t, df, p = oracles.paired_t(cmp.correct, ref.correct) if cmp.correct != ref.correct else (0.0, n_test - 1, 1.0)
    assert tt.t == pytest.approx(t) and tt.p == pytest.approx(p)
    assert ref.ids == tuple(d.id for d in run.split.test)
    again = run_grid(small_corpus, grid, seed=3)
    assert [r.to_json() for r in again.reports] == [r.to_json() for r in run.reports]


def _outcome_dialogue(i, outcome):
    hand = HandLabels(human_label=("collect",), user_modality="speech")
    x = ExchangeLog(1, sys_label="COLLECT", hand=hand)
    if outcome == "TASKSUCCESS":
        return DialogueRecord(f"d{i}", (x,), "completed", executed_task="collect")
    if outcome == "TASKFAILURE":
        return DialogueRecord(f"d{i}", (x,), "completed", executed_task="third-number")
    return DialogueRecord(f"d{i}", (x,), "user-hangup")


def test_balanced_subsample_sizes():
    train = [_outcome_dialogue(i, "TASKSUCCESS") for i in range(1000)]
    train += [_outcome_dialogue(1000 + i, "TASKFAILURE") for i in range(345)]
    train += [_outcome_dialogue(2000 + i, "HANGUP") for i in range(50)]
    test = [_outcome_dialogue(3000 + i, "TASKSUCCESS") for i in range(300)]
    test += [_outcome_dialogue(4000 + i, "TASKFAILURE") for i in range(108)]
    tr, te = balanced_subsample((train, test), ("TASKSUCCESS", "TASKFAILURE"), seed=1)
    assert (len(tr), len(te)) == (690, 216)
    for side in (tr, te):
        raw = [derive_outcome(d).raw for d in side]
        assert raw.count("TASKSUCCESS") == raw.count("TASKFAILURE")
    tr2, te2 = balanced_subsample((tr, te), ("TASKSUCCESS", "TASKFAILURE"), seed=5)
    assert (len(tr2), len(te2)) == (690, 216)
    with pytest.raises(ValueError):
        balanced_subsample((train, test), ("TASKSUCCESS", "WIZARD"))
