"""IBM Model 2 word alignment plus candidate reranking.

Both directions are trained independently with standard EM: lexical
tables start uniform over the observed target vocabulary, positional
tables start uniform over source positions (position 0 is the NULL word).
The association score combines both directions:

    s_asso(x, c) = log prod_i sum_j p(c_i|x_j) a(j|i)
                 + log prod_j sum_i p(x_j|c_i) a(i|j)

and the final reranking score is generation + reconstruction +
association.  Unseen words and missing table entries are floored at 1e-9
so open-vocabulary inputs never produce -inf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

NULL = "<null>"
PROB_FLOOR = 1e-9
MAX_POS = 32  # positional tables bucket exact positions/lengths up to here


def _clamp(n: int) -> int:
    return min(n, MAX_POS)


@dataclass
class _Direction:
    """One translation direction: p(tgt-word | src-word) and a(j | i, ls, lt)."""

    lex: dict = field(default_factory=dict)   # src -> {tgt: p}
    pos: dict = field(default_factory=dict)   # (i, ls, lt) -> [p_j for j 0..ls]
    loglik: list = field(default_factory=list)

    def lex_prob(self, src: str, tgt: str) -> float:
        return max(self.lex.get(src, {}).get(tgt, 0.0), PROB_FLOOR)

    def pos_probs(self, i: int, ls: int, lt: int) -> list:
        key = (_clamp(i), _clamp(ls), _clamp(lt))
        probs = self.pos.get(key)
        if probs is None or len(probs) != ls + 1:
            return [1.0 / (ls + 1)] * (ls + 1)
        return probs

    def to_json(self) -> dict:
        return {
            "lex": self.lex,
            "pos": {f"{i},{ls},{lt}": p
                    for (i, ls, lt), p in self.pos.items()},
            "loglik": self.loglik,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "_Direction":
        pos = {tuple(int(v) for v in key.split(",")): probs
               for key, probs in obj["pos"].items()}
        return cls(lex=obj["lex"], pos=pos, loglik=list(obj["loglik"]))


@dataclass
class AlignmentModel:
    """Both-direction IBM Model 2 tables; immutable once trained."""

    fwd: _Direction        # source = x, target = c
    rev: _Direction        # source = c, target = x
    vocab_x: tuple = ()
    vocab_c: tuple = ()

    FORMAT_VERSION = 1

    def save(self, path) -> None:
        obj = {"version": self.FORMAT_VERSION,
               "fwd": self.fwd.to_json(), "rev": self.rev.to_json(),
               "vocab_x": list(self.vocab_x), "vocab_c": list(self.vocab_c)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh)

    @classmethod
    def load(cls, path) -> "AlignmentModel":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if obj.get("version") != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported model version: {obj.get('version')}")
        return cls(fwd=_Direction.from_json(obj["fwd"]),
                   rev=_Direction.from_json(obj["rev"]),
                   vocab_x=tuple(obj["vocab_x"]),
                   vocab_c=tuple(obj["vocab_c"]))


def _train_direction(pairs, epochs: int) -> _Direction:
    """EM for one direction; pairs are (source tokens, target tokens)."""
    tgt_vocab = sorted({w for _, t in pairs for w in t})
    uniform = 1.0 / len(tgt_vocab)
    lex = {}
    for src, tgt in pairs:
        for s in list(src) + [NULL]:
            row = lex.setdefault(s, {})
            for w in tgt:
                row.setdefault(w, uniform)
    pos = {}
    for src, tgt in pairs:
        ls, lt = len(src), len(tgt)
        for i in range(1, lt + 1):
            pos.setdefault((_clamp(i), _clamp(ls), _clamp(lt)),
                           [1.0 / (ls + 1)] * (ls + 1))

    direction = _Direction(lex=lex, pos=pos)
    for _ in range(epochs):
        lex_counts = {}
        lex_totals = {}
        pos_counts = {}
        pos_totals = {}
        loglik = 0.0
        for src, tgt in pairs:
            ls, lt = len(src), len(tgt)
            words = [NULL] + list(src)
            for i, w in enumerate(tgt, start=1):
                aprob = direction.pos_probs(i, ls, lt)
                terms = [direction.lex_prob(words[j], w) * aprob[j]
                         for j in range(ls + 1)]
                z = sum(terms)
                loglik += math.log(max(z, PROB_FLOOR))
                key = (_clamp(i), _clamp(ls), _clamp(lt))
                for j in range(ls + 1):
                    delta = terms[j] / z
                    lex_counts.setdefault(words[j], {})
                    lex_counts[words[j]][w] = \
                        lex_counts[words[j]].get(w, 0.0) + delta
                    lex_totals[words[j]] = lex_totals.get(words[j], 0.0) + delta
                    row = pos_counts.setdefault(key, [0.0] * (ls + 1))
                    row[j] += delta
                    pos_totals[key] = pos_totals.get(key, 0.0) + delta
        for s, row in lex_counts.items():
            total = lex_totals[s]
            direction.lex[s] = {w: c / total for w, c in row.items()}
        for key, row in pos_counts.items():
            total = pos_totals[key]
            direction.pos[key] = [c / total for c in row]
        direction.loglik.append(loglik)
    return direction


def train_ibm2(pairs: Sequence, epochs: int) -> AlignmentModel:
    """EM training of both directions on (x tokens, c tokens) pairs."""
    pairs = [(tuple(x), tuple(c)) for x, c in pairs]
    if not pairs:
        raise ValueError("empty pair list")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    for x, c in pairs:
        if not x or not c:
            raise ValueError("pair with an empty side")
    fwd = _train_direction(pairs, epochs)
    rev = _train_direction([(c, x) for x, c in pairs], epochs)
    return AlignmentModel(
        fwd=fwd, rev=rev,
        vocab_x=tuple(sorted({w for x, _ in pairs for w in x})),
        vocab_c=tuple(sorted({w for _, c in pairs for w in c})))


def _direction_score(direction: _Direction, src, tgt) -> float:
    ls, lt = len(src), len(tgt)
    words = [NULL] + list(src)
    total = 0.0
    for i, w in enumerate(tgt, start=1):
        aprob = direction.pos_probs(i, ls, lt)
        inner = sum(direction.lex_prob(words[j], w) * aprob[j]
                    for j in range(ls + 1))
        total += math.log(max(inner, PROB_FLOOR))
    return total


def association_score(m: AlignmentModel, x, c) -> float:
    """Both-direction alignment score; position 0 is the NULL word."""
    x, c = tuple(x), tuple(c)
    if not x or not c:
        raise ValueError("x and c must be non-empty")
    return _direction_score(m.fwd, x, c) + _direction_score(m.rev, c, x)


def reconstruction_score(scorer, x, c) -> float:
    """Log-probability of reproducing the input ``x`` from candidate ``c``."""
    return scorer.score_sequence(source=c, target=x)


def aggregate_score(gen: float, rec: float, asso: float,
                    weights=(1.0, 1.0, 1.0)) -> float:
    w_gen, w_rec, w_asso = weights
    return w_gen * gen + w_rec * rec + w_asso * asso


@dataclass(frozen=True)
class RerankedCandidate:
    candidate: object
    gen: float
    rec: float
    asso: float
    total: float


def rerank(x, candidates, scorer, m: AlignmentModel,
           weights=(1.0, 1.0, 1.0)) -> list:
    """Score generation + reconstruction + association per candidate and
    sort by the total, descending (decoder tie-break rules on ties)."""
    x = tuple(x)
    out = []
    for c in candidates:
        gen = c.logp
        rec = reconstruction_score(scorer, x, c.utterance)
        asso = association_score(m, x, c.utterance)
        out.append(RerankedCandidate(
            candidate=c, gen=gen, rec=rec, asso=asso,
            total=aggregate_score(gen, rec, asso, weights)))
    out.sort(key=lambda r: (-r.total, len(r.candidate.utterance),
                            r.candidate.utterance))
    return out


def load_pairs(path) -> list:
    """JSONL pair file: one {"x": [...], "c": [...]} object per line."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            x, c = obj["x"], obj["c"]
            if not x or not c:
                raise ValueError(f"line {line_no}: pair with an empty side")
            pairs.append((tuple(x), tuple(c)))
    return pairs
