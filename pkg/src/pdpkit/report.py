"""Delimited and plain-text renderings of experiment reports."""

from __future__ import annotations

import csv
import io
import math
from typing import Sequence

from .dialog import WINDOWS
from .metrics import EvalReport, pct

_WINDOW_HEAD = {"EX1": "Exchange 1", "EX12": "Exchanges 1&2", "WHOLE": "Full dialogue"}


def grid_rows(reports: Sequence[EvalReport]) -> list[tuple[str, dict[str, EvalReport]]]:
    """Group reports by row name, keeping first-seen order; columns are windows."""
    rows: dict[str, dict[str, EvalReport]] = {}
    for r in reports:
        rows.setdefault(r.name, {})[r.config.get("window", "")] = r
    return list(rows.items())


def render_table(reports: Sequence[EvalReport]) -> str:
    """Tab-separated accuracy table: one row per feature-set/mode, one column per window."""
    rows = grid_rows(reports)
    used = [w for w in WINDOWS if any(w in cols for _, cols in rows)]
    lines = ["\t".join(["Features used"] + [_WINDOW_HEAD[w] for w in used])]
    for name, cols in rows:
        cells = [pct(cols[w].accuracy) if w in cols else "-" for w in used]
        lines.append("\t".join([name] + cells))
    n = {r.matrix.total for r in reports}
    if reports:
        lines.append(f"# test dialogues: {','.join(str(x) for x in sorted(n))}")
    return "\n".join(lines) + "\n"


def _num(x: float | None) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def render_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    classes = list(reports[0].per_class) if reports else []
    head = ["row", "window", "feature_set", "slu_mode", "n", "accuracy", "baseline_class", "baseline"]
    for c in classes:
        head += [f"recall:{c}", f"precision:{c}"]
    head += ["t", "df", "p", "reference"]
    w.writerow(head)
    for r in reports:
        cfg = r.config
        line = [r.name, cfg.get("window", ""), cfg.get("feature_set", ""), cfg.get("slu_mode", ""),
                r.matrix.total, _num(r.accuracy), r.baseline[0], _num(r.baseline[1])]
        for c in classes:
            rec, prec = r.per_class[c]
            line += [_num(rec), _num(prec)]
        if r.ttests:
            t = r.ttests[0]
            line += [_num(t.t), t.df, _num(t.p), t.reference]
        else:
            line += ["", "", "", ""]
        w.writerow(line)
    return buf.getvalue()
