"""Command-line pipeline: generate, extract, stack, train, predict, evaluate, compare, inspect.

Every command writes its outputs atomically and leaves ``<out>.manifest.json`` beside them.
Failures print one JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, replace
from typing import Any, Sequence

from . import __version__
from .cascade import (
    AUTO,
    HLT,
    NONE,
    SLU_MODES,
    ExperimentConfig,
    ModeResourceError,
    StackedCorpus,
    assemble_pdp_dataset,
    exchange_dataset,
    jackknife_stack,
    run_grid,
    split_corpus,
    table5_grid,
    train_slu_predictor,
)
from .dialog import BINARY_OUTCOMES, SLU_BINARY, SLU_CLASSES, WINDOWS, LogFormatError, dumps_corpus, loads_corpus
from .metrics import EvalReport, TTestResult, evaluate, paired_t, render_precision_recall
from .plotting import accuracy_figure, save_png
from .report import render_csv, render_table
from .ripper import RuleSet, SchemaMismatchError, TrainConfig, predict_dataset, train
from .synth import GeneratorConfig, GeneratorConfigError, generate
from .tabular import SchemaError, dumps_dataset


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_digest: str
    inputs: dict[str, str]
    seed: int | None
    outputs: list[str]
    version: str = __version__

    def dumps(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"


# -- file helpers -------------------------------------------------------------

def atomic_write(path: str, data: str | bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise CliError("missing-file", f"no such file: {path}") from None


def _digest_file(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _load_corpus(path: str):
    return loads_corpus(_read(path))


def _load_model(path: str) -> RuleSet:
    try:
        return RuleSet.loads(_read(path))
    except (ValueError, KeyError) as exc:
        raise CliError("bad-format", f"{path}: {exc}") from None


def _load_stack(path: str) -> StackedCorpus:
    try:
        return StackedCorpus.from_json(json.loads(_read(path)))
    except (ValueError, KeyError) as exc:
        raise CliError("bad-format", f"{path}: {exc}") from None


def _finish(args, outputs: dict[str, str | bytes], inputs: Sequence[str | None], config: Any) -> None:
    for path, data in outputs.items():
        atomic_write(path, data)
    manifest = RunManifest(
        command=args.command,
        config_digest=hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16],
        inputs={p: _digest_file(p) for p in inputs if p},
        seed=getattr(args, "seed", None),
        outputs=list(outputs),
    )
    atomic_write(args.out + ".manifest.json", manifest.dumps())


def _learner(args) -> TrainConfig:
    return TrainConfig(loss_ratio=args.loss_ratio, seed=args.seed)


def _experiment(args) -> ExperimentConfig:
    return ExperimentConfig(args.window, args.feature_set or "AUTO", args.slu_mode, _learner(args), args.folds,
                            args.seed, args.collapse)


def _split(args, corpus):
    return split_corpus(corpus, args.seed, args.test_fraction) if args.test_fraction else split_corpus(corpus, args.seed)


def _side(split, side: str):
    return {"train": split.train, "test": split.test, "all": split.train + split.test}[side]


# -- commands -----------------------------------------------------------------

def cmd_gen_corpus(args) -> None:
    try:
        cfg = GeneratorConfig(
            n_dialogues=args.dialogues, seed=args.seed, signal_strength=args.signal_strength,
            asr_duration_spread=args.duration_spread, confidence_overlap=args.confidence_overlap,
            hangup_propensity=args.hangup_propensity, total_exchanges=args.total_exchanges,
        )
    except GeneratorConfigError as exc:
        raise CliError("invalid-config", str(exc)) from None
    _finish(args, {args.out: dumps_corpus(generate(cfg))}, [], cfg.to_json())


def cmd_extract(args) -> None:
    corpus = _load_corpus(args.corpus)
    if args.level == "exchange":
        data = exchange_dataset(corpus, args.feature_set or "SLU-INPUT", args.collapse)
        config = {"level": "exchange", "feature_set": args.feature_set or "SLU-INPUT", "collapse": args.collapse}
    else:
        exp = _experiment(args)
        stacked = _load_stack(args.stack) if args.stack else None
        split = _split(args, corpus)
        side = _side(split, args.side)
        if stacked is not None and args.side == "all" and exp.slu_mode in (AUTO, HLT):
            raise CliError("invalid-argument", "--side all mixes stacked and predicted values; pick train or test")
        data = assemble_pdp_dataset(side, exp, stacked, "test" if args.side == "test" else "train",
                                    max(len(d.exchanges) for d in corpus))
        config = {"level": "dialogue", "experiment": exp.to_json(), "side": args.side}
    _finish(args, {args.out: dumps_dataset(data)}, [args.corpus, args.stack], config)


def cmd_train_slu(args) -> None:
    corpus = _load_corpus(args.corpus)
    split = _split(args, corpus)
    feature_set = args.feature_set or "SLU-INPUT"
    data = exchange_dataset(_side(split, args.side), feature_set, args.collapse)
    model = train_slu_predictor(data, feature_set, _learner(args), args.collapse)
    meta = {"kind": "slu", "feature_set": feature_set, "collapse": args.collapse}
    model = replace(model, config={**model.config, "pipeline": meta})
    _finish(args, {args.out: model.dumps()}, [args.corpus], model.config)


def cmd_stack(args) -> None:
    corpus = _load_corpus(args.corpus)
    split = _split(args, corpus)
    data = exchange_dataset(split.train, collapse=args.collapse)
    stacked = jackknife_stack(data, _learner(args), args.folds, args.seed, collapse=args.collapse)
    bad = stacked.audit()
    if bad:
        raise CliError("leakage", f"{len(bad)} stacked values came from models that saw their dialogue")
    text = json.dumps(stacked.to_json(), sort_keys=True, separators=(",", ":")) + "\n"
    _finish(args, {args.out: text}, [args.corpus],
            {"folds": args.folds, "collapse": args.collapse, "learner": _learner(args).to_json()})


def cmd_train_pdp(args) -> None:
    corpus = _load_corpus(args.corpus)
    exp = _experiment(args)
    stacked = _load_stack(args.stack) if args.stack else None
    split = _split(args, corpus)
    data = assemble_pdp_dataset(split.train, exp, stacked, "train", max(len(d.exchanges) for d in corpus))
    model = train(data, exp.learner)
    meta = {"kind": "pdp", "experiment": exp.to_json(), "max_exchanges": max(len(d.exchanges) for d in corpus)}
    model = replace(model, config={**model.config, "pipeline": meta})
    _finish(args, {args.out: model.dumps()}, [args.corpus, args.stack], model.config)


def _predictions(model: RuleSet, corpus, args) -> tuple[list[str], list[str | None], list[tuple[str, int | None]]]:
    meta = dict(model.config.get("pipeline", {}))
    split = _split(args, corpus)
    side = _side(split, args.side)
    if meta.get("kind") == "slu":
        data = exchange_dataset(side, meta["feature_set"], meta["collapse"])
    elif meta.get("kind") == "pdp":
        exp = ExperimentConfig.from_json(meta["experiment"])
        stacked = _load_stack(args.stack) if args.stack else None
        data = assemble_pdp_dataset(side, exp, stacked, "train" if args.side == "train" else "test",
                                    meta.get("max_exchanges"))
    else:
        raise CliError("bad-format", "model lacks pipeline metadata; train it with train-slu or train-pdp")
    preds = predict_dataset(model, data)
    return [x.id for x in data], [x.label for x in data], [(p.label, p.rule) for p in preds]


def _prediction_tsv(ids, truth, preds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["id", "truth", "predicted", "rule"])
    for i, t, (label, rule) in zip(ids, truth, preds):
        w.writerow([i, "" if t is None else t, label, "default" if rule is None else rule])
    return buf.getvalue()


def _read_predictions(path: str) -> list[dict[str, str]]:
    rows = list(csv.DictReader(io.StringIO(_read(path)), delimiter="\t"))
    if rows and not {"id", "truth", "predicted"} <= set(rows[0]):
        raise CliError("bad-format", f"{path}: prediction files need id, truth and predicted columns")
    return rows


def cmd_predict(args) -> None:
    corpus = _load_corpus(args.corpus)
    model = _load_model(args.model)
    ids, truth, preds = _predictions(model, corpus, args)
    _finish(args, {args.out: _prediction_tsv(ids, truth, preds)}, [args.corpus, args.model, args.stack],
            {"side": args.side, "model": model.fingerprint})


def _report_outputs(base: str, reports: Sequence[EvalReport], text: str) -> dict[str, str | bytes]:
    record = {
        "format": "pdpkit.report/1",
        "reports": [{**r.to_json(), "ids": list(r.ids), "correct": list(r.correct)} for r in reports],
    }
    return {
        base + ".json": json.dumps(record, sort_keys=True, indent=1) + "\n",
        base + ".txt": text,
        base + ".csv": render_csv(reports),
        base + ".png": save_png(accuracy_figure(reports)),
    }


def _base(out: str) -> str:
    root, ext = os.path.splitext(out)
    return root if ext in (".json", ".txt", ".csv", ".png") else out


def cmd_evaluate(args) -> None:
    base = _base(args.out)
    if args.predictions:
        rows = _read_predictions(args.predictions)
        truth = [r["truth"] for r in rows]
        if any(not t for t in truth):
            raise CliError("missing-labels", "predictions lack truth labels; cannot evaluate")
        seen = set(truth) | {r["predicted"] for r in rows}
        classes = next((c for c in (BINARY_OUTCOMES, SLU_CLASSES, SLU_BINARY) if seen <= set(c)), tuple(sorted(seen)))
        rep = evaluate(truth, [r["predicted"] for r in rows], classes, {"name": os.path.basename(args.predictions)},
                       ids=[r["id"] for r in rows])
        text = render_precision_recall(rep) + "\n\n" + rep.matrix.render() + f"\n\naccuracy\t{100 * rep.accuracy:.1f}\n"
        outputs = _report_outputs(base, [rep], text)
        _finish(args, outputs, [args.predictions], {"predictions": args.predictions})
        return
    corpus = _load_corpus(args.corpus)
    if args.grid:
        try:
            grid = [ExperimentConfig.from_json(c) for c in json.loads(_read(args.grid))]
        except (ValueError, KeyError, TypeError) as exc:
            raise CliError("bad-format", f"{args.grid}: {exc}") from None
    else:
        grid = table5_grid(_learner(args), args.seed, args.folds)
    split = _split(args, corpus)
    reports = run_grid(corpus, grid, args.seed, split=split).reports
    outputs = _report_outputs(base, reports, render_table(reports))
    _finish(args, outputs, [args.corpus, args.grid], [c.to_json() for c in grid])


def cmd_ttest(args) -> None:
    a = {r["id"]: r for r in _read_predictions(args.a)}
    b = {r["id"]: r for r in _read_predictions(args.b)}
    if set(a) != set(b):
        raise CliError("unpaired", "prediction files cover different examples")
    ids = sorted(a)
    score = lambda rows: [int(rows[i]["truth"] == rows[i]["predicted"]) for i in ids]  # noqa: E731
    t = paired_t(score(a), score(b))
    res = TTestResult(args.b, *t)
    text = json.dumps({"a": args.a, "b": args.b, "n": len(ids), **res.to_json()}, sort_keys=True) + "\n"
    _finish(args, {args.out: text}, [args.a, args.b], {"a": args.a, "b": args.b})


def cmd_inspect_rules(args) -> None:
    model = _load_model(args.model)
    text = model.render()
    if args.out:
        _finish(args, {args.out: text}, [args.model], {"model": model.fingerprint})
    else:
        sys.stdout.write(text)


# -- parser ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems become machine-readable errors too
        raise CliError("usage", message)


def _common(p, *, corpus=False, out=True, model=False, learner=False, window=False, split=False):
    if corpus:
        p.add_argument("--corpus", required=True)
    if model:
        p.add_argument("--model", required=True)
    if out:
        p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    if learner:
        p.add_argument("--loss-ratio", type=float, default=1.0)
        p.add_argument("--folds", type=int, default=4)
        p.add_argument("--collapse", action="store_true")
    if window:
        p.add_argument("--window", type=str.upper, choices=WINDOWS, default="EX12")
        p.add_argument("--feature-set", default=None)
        p.add_argument("--slu-mode", type=str.lower, choices=SLU_MODES, default=NONE)
        p.add_argument("--stack", default=None, help="stacked SLU values from the stack command")
    if split:
        p.add_argument("--test-fraction", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pdpkit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-corpus", help="write a synthetic dialogue corpus")
    _common(p)
    p.add_argument("--dialogues", type=int, default=4692)
    p.add_argument("--signal-strength", type=float, default=0.9)
    p.add_argument("--total-exchanges", type=int, default=None)
    p.add_argument("--duration-spread", type=float, default=1.0)
    p.add_argument("--confidence-overlap", type=float, default=0.8)
    p.add_argument("--hangup-propensity", type=float, default=0.5)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("extract", help="write feature vectors for exchanges or dialogue windows")
    _common(p, corpus=True, learner=True, window=True, split=True)
    p.add_argument("--level", choices=("exchange", "dialogue"), default="dialogue")
    p.add_argument("--side", choices=("train", "test", "all"), default="all")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-slu", help="train the per-exchange SLU-outcome model")
    _common(p, corpus=True, learner=True, split=True)
    p.add_argument("--feature-set", default=None)
    p.add_argument("--side", choices=("train", "all"), default="train")
    p.set_defaults(func=cmd_train_slu)

    p = sub.add_parser("stack", help="out-of-fold SLU predictions for the training dialogues")
    _common(p, corpus=True, learner=True, split=True)
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("train-pdp", help="train the problematic-dialogue predictor")
    _common(p, corpus=True, learner=True, window=True, split=True)
    p.set_defaults(func=cmd_train_pdp)

    p = sub.add_parser("predict", help="apply a trained model to one side of the split")
    _common(p, corpus=True, model=True, split=True)
    p.add_argument("--stack", default=None)
    p.add_argument("--side", choices=("train", "test", "all"), default="test")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run an experiment grid, or score a prediction file")
    _common(p, learner=True, split=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--grid", default=None, help="JSON list of experiment configs")
    p.add_argument("--predictions", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ttest", help="paired t-test between two prediction files")
    _common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("inspect-rules", help="print a model as readable rules")
    _common(p, model=True, out=False)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_inspect_rules)
    return ap


_CODES = (
    (SchemaMismatchError, "schema-mismatch"),
    (ModeResourceError, "mode-resource"),
    (LogFormatError, "bad-format"),
    (SchemaError, "schema"),
    (json.JSONDecodeError, "bad-format"),
    (ValueError, "invalid-argument"),
)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "evaluate" and not (args.corpus or args.predictions):
            raise CliError("usage", "evaluate needs --corpus or --predictions")
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc)
    except OSError as exc:
        return _fail("io", exc)
    except Exception as exc:
        for kind, code in _CODES:
            if isinstance(exc, kind):
                return _fail(code, exc)
        raise
    return 0


def _fail(code: str, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    sys.stderr.write(json.dumps({"error": code, "type": type(exc).__name__, "message": msg}) + "\n")
    return 2 if code == "usage" else 1


if __name__ == "__main__":
    sys.exit(main())
