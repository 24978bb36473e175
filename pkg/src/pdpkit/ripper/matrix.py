"""Columnar compilation of a Dataset for fast candidate scoring.

Every candidate condition of the schema is enumerated once at compile time;
scoring a grow step is then a handful of vectorized passes over all rows.
Row subsets (grow/prune splits, folds) are boolean masks over the compiled rows.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..tabular import CONTINUOUS, SET_VALUED, SYMBOLIC, Dataset

LE, GE, EQ, CONTAINS = 0, 1, 2, 3
OPS = ("<=", ">=", "=", "contains")


class Matrix:
    def __init__(self, dataset: Dataset):
        schema = dataset.schema
        examples = dataset.examples
        n = len(examples)
        self.n = n
        self.schema = schema
        self.classes = tuple(dataset.classes)
        class_index = {c: i for i, c in enumerate(self.classes)}
        self.labels = np.array(
            [class_index[ex.label] if ex.label is not None else -1 for ex in examples], dtype=np.int64
        )
        self.ids = [ex.id for ex in examples]

        feats = schema.features
        decl = {s.name: i for i, s in enumerate(feats)}
        num = [s.name for s in feats if s.kind == CONTINUOUS]
        sym = [s.name for s in feats if s.kind == SYMBOLIC]
        sets = [s.name for s in feats if s.kind == SET_VALUED]
        self.num_names, self.sym_names, self.set_names = num, sym, sets
        self.n_conditions = 2 * len(num) + len(sym) + len(sets)
        slot = {}
        for i, name in enumerate(num):
            slot[name] = (CONTINUOUS, i)
        for i, name in enumerate(sym):
            slot[name] = (SYMBOLIC, i)
        for i, name in enumerate(sets):
            slot[name] = (SET_VALUED, i)
        self._slot = slot

        values = np.full((len(num), n), np.nan)
        sym_raw: list[list] = [[None] * n for _ in sym]
        set_rows: list[list] = [[] for _ in sets]
        for r, ex in enumerate(examples):
            for name, v in ex.values.items():
                if v is None:
                    continue
                kind, i = slot.get(name, (None, None))
                if kind == CONTINUOUS:
                    values[i, r] = v
                elif kind == SYMBOLIC:
                    sym_raw[i][r] = v
                elif kind == SET_VALUED:
                    if v:
                        set_rows[i].append((r, v))
        self.values = values

        # symbolic: integer codes over a sorted vocabulary, -1 = missing
        self.sym_vocab: list[list[str]] = []
        self.sym_lookup: list[dict[str, int]] = []
        codes = np.full((len(sym), n), -1, dtype=np.int64)
        for i, col in enumerate(sym_raw):
            vocab = sorted({v for v in col if v is not None})
            look = {v: j for j, v in enumerate(vocab)}
            self.sym_vocab.append(vocab)
            self.sym_lookup.append(look)
            if vocab:
                codes[i] = [look[v] if v is not None else -1 for v in col]
        self.codes = codes

        # set-valued: binary incidence matrices (rows x tokens), tokens sorted
        self.set_vocab: list[list[str]] = []
        self.set_lookup: list[dict[str, int]] = []
        self.set_csc: list[sp.csc_matrix] = []
        blocks = []
        for i, pairs in enumerate(set_rows):
            vocab = sorted({t for _, toks in pairs for t in toks})
            look = {t: j for j, t in enumerate(vocab)}
            ri, ci = [], []
            for r, toks in pairs:
                for t in set(toks):
                    ri.append(r)
                    ci.append(look[t])
            m = sp.csr_matrix(
                (np.ones(len(ri)), (np.array(ri, dtype=np.int64), np.array(ci, dtype=np.int64))),
                shape=(n, len(vocab)),
            )
            self.set_vocab.append(vocab)
            self.set_lookup.append(look)
            self.set_csc.append(m.tocsc())
            blocks.append(m)

        self._build_candidates(decl, blocks)

    def _build_candidates(self, decl: dict[str, int], set_blocks: list) -> None:
        n = self.n
        F = len(self.num_names)
        # numeric: global sort order per feature, NaN last
        if F:
            self.orders = np.argsort(self.values, axis=1, kind="stable")
            sv = np.take_along_axis(self.values, self.orders, axis=1)
        else:
            self.orders = np.zeros((0, n), dtype=np.int64)
            sv = np.zeros((0, n))
        # each distinct observed value of a numeric feature is a group; groups are
        # numbered feature-major in ascending value, and `groups` maps rows to them
        feat, val = [], []
        groups = np.empty((F, n), dtype=np.int64)
        g0 = np.zeros(F, dtype=np.int64)
        offset = 0
        for f in range(F):
            row = sv[f]
            m = int(np.count_nonzero(~np.isnan(row)))
            g0[f] = offset
            v = row[:m]
            change = v[1:] != v[:-1]
            rank = np.concatenate(([0], np.cumsum(change))) if m else np.zeros(0, np.int64)
            groups[f, self.orders[f, :m]] = rank + offset
            groups[f, self.orders[f, m:]] = -1
            k = int(rank[-1]) + 1 if m else 0
            if k:
                feat.append(np.full(k, f))
                val.append(v[np.concatenate(([0], np.flatnonzero(change) + 1))])
            offset += k
        self.n_groups = offset
        groups[groups < 0] = offset  # missing values land in a discarded overflow bin
        self.groups = groups
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
        self.num_feat = cat(feat, np.int64)
        self.num_val = cat(val, np.float64)
        # per group: first and last group index of its feature
        ends = np.append(g0[1:], offset)
        self.num_g0 = g0[self.num_feat]
        self.num_g1 = ends[self.num_feat] - 1
        self.num_decl = np.array([decl[name] for name in self.num_names], dtype=np.int64)

        # symbolic: flat value index = offset[i] + code
        sizes = [len(v) for v in self.sym_vocab]
        self.sym_offset = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        self.n_sym_values = int(self.sym_offset[-1])
        flat = self.codes + self.sym_offset[:-1, None] if len(sizes) else self.codes
        self.sym_flat = np.where(self.codes >= 0, flat, -1)
        self.sym_cand_feat = np.repeat(np.arange(len(sizes)), sizes).astype(np.int64)
        self.sym_cand_code = (
            np.concatenate([np.arange(s) for s in sizes]).astype(np.int64) if sizes else np.zeros(0, np.int64)
        )
        self.sym_decl = np.array([decl[name] for name in self.sym_names], dtype=np.int64)

        tsizes = [len(v) for v in self.set_vocab]
        self.set_offset = np.concatenate(([0], np.cumsum(tsizes))).astype(np.int64)
        self.set_cand_feat = np.repeat(np.arange(len(tsizes)), tsizes).astype(np.int64)
        self.set_cand_tok = (
            np.concatenate([np.arange(s) for s in tsizes]).astype(np.int64) if tsizes else np.zeros(0, np.int64)
        )
        self.set_decl = np.array([decl[name] for name in self.set_names], dtype=np.int64)
        if set_blocks and sum(tsizes):
            self.set_T = sp.hstack(set_blocks, format="csr").T.tocsr()
        else:
            self.set_T = None

    # -- condition evaluation -------------------------------------------------

    def kind_of(self, feature: str):
        return self._slot.get(feature, (None, None))

    def condition_mask(self, feature: str, op: str, value) -> np.ndarray:
        kind, i = self.kind_of(feature)
        if kind is None:
            return np.zeros(self.n, dtype=bool)
        if kind == CONTINUOUS:
            col = self.values[i]
            with np.errstate(invalid="ignore"):
                if op == "<=":
                    return col <= value
                if op == ">=":
                    return col >= value
            return np.zeros(self.n, dtype=bool)
        if kind == SYMBOLIC:
            code = self.sym_lookup[i].get(value) if op == "=" else None
            if code is None:
                return np.zeros(self.n, dtype=bool)
            return self.codes[i] == code
        tok = self.set_lookup[i].get(value) if op == "contains" else None
        out = np.zeros(self.n, dtype=bool)
        if tok is not None:
            m = self.set_csc[i]
            out[m.indices[m.indptr[tok]:m.indptr[tok + 1]]] = True
        return out

    # -- candidate scoring ----------------------------------------------------

    def candidate_counts(self, covered: np.ndarray, pos: np.ndarray):
        """Positive/negative coverage of every candidate condition, restricted to ``covered``.

        Returns (p_after, n_after, observed, meta) where ``observed`` marks candidates
        whose value occurs among covered rows and ``meta`` describes each candidate.
        """
        cp_mask = covered & pos
        cn_mask = covered & ~pos
        parts_p, parts_n, parts_obs = [], [], []
        if len(self.num_feat):
            ng = self.n_groups
            pc = np.bincount(self.groups[:, cp_mask].ravel(), minlength=ng + 1)[:ng]
            nc = np.bincount(self.groups[:, cn_mask].ravel(), minlength=ng + 1)[:ng]
            le_p, ge_p = _scan(pc, self.num_g0, self.num_g1)
            le_n, ge_n = _scan(nc, self.num_g0, self.num_g1)
            obs = (pc + nc) > 0
            parts_p += [le_p, ge_p]
            parts_n += [le_n, ge_n]
            parts_obs += [obs, obs]
        if self.n_sym_values:
            fl = self.sym_flat
            pc = np.bincount(fl[:, cp_mask].ravel() + 1, minlength=self.n_sym_values + 1)[1:]
            nc = np.bincount(fl[:, cn_mask].ravel() + 1, minlength=self.n_sym_values + 1)[1:]
            parts_p.append(pc)
            parts_n.append(nc)
            parts_obs.append((pc + nc) > 0)
        if self.set_T is not None:
            pc = np.rint(self.set_T @ cp_mask.astype(np.float64)).astype(np.int64)
            nc = np.rint(self.set_T @ cn_mask.astype(np.float64)).astype(np.int64)
            parts_p.append(pc)
            parts_n.append(nc)
            parts_obs.append((pc + nc) > 0)
        if not parts_p:
            z = np.zeros(0, dtype=np.int64)
            return z, z, z.astype(bool)
        return (
            np.concatenate(parts_p).astype(np.int64),
            np.concatenate(parts_n).astype(np.int64),
            np.concatenate(parts_obs),
        )

    def candidate_meta(self):
        """Static per-candidate arrays (op, declaration order, tiebreak value) aligned with
        :meth:`candidate_counts`; cached."""
        if getattr(self, "_meta", None) is None:
            ops, decl, tie = [], [], []
            k = len(self.num_feat)
            if k:
                d = self.num_decl[self.num_feat]
                ops += [np.full(k, LE), np.full(k, GE)]
                decl += [d, d]
                tie += [self.num_val, self.num_val]
            if self.n_sym_values:
                ops.append(np.full(self.n_sym_values, EQ))
                decl.append(self.sym_decl[self.sym_cand_feat])
                tie.append(self.sym_cand_code.astype(np.float64))
            if self.set_T is not None:
                nt = len(self.set_cand_feat)
                ops.append(np.full(nt, CONTAINS))
                decl.append(self.set_decl[self.set_cand_feat])
                tie.append(self.set_cand_tok.astype(np.float64))
            if ops:
                self._meta = (np.concatenate(ops), np.concatenate(decl), np.concatenate(tie))
            else:
                z = np.zeros(0)
                self._meta = (z.astype(np.int64), z.astype(np.int64), z)
        return self._meta

    def candidate_condition(self, j: int):
        """Decode flat candidate index ``j`` into (feature, op, value)."""
        k = len(self.num_feat)
        if j < 2 * k:
            c = j % k
            f = int(self.num_feat[c])
            return self.num_names[f], OPS[j // k], float(self.num_val[c])
        j -= 2 * k
        if j < self.n_sym_values:
            f = int(self.sym_cand_feat[j])
            return self.sym_names[f], "=", self.sym_vocab[f][int(self.sym_cand_code[j])]
        j -= self.n_sym_values
        f = int(self.set_cand_feat[j])
        return self.set_names[f], "contains", self.set_vocab[f][int(self.set_cand_tok[j])]


def _scan(counts: np.ndarray, g0: np.ndarray, g1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per group: total count at or below it, and at or above it, within its feature."""
    cum = np.cumsum(counts)
    before = np.where(g0 > 0, cum[np.maximum(g0 - 1, 0)], 0)
    le = cum - before
    ge = (cum[g1] - before) - le + counts
    return le, ge


def compile_dataset(dataset: Dataset) -> Matrix:
    return Matrix(dataset)
