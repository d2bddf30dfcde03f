"""Synchronous semantic decoding via constrained beam search.

Two inference paths produce N-best (canonical utterance, logical form)
candidates for an input utterance:

* rule-level: the decoding unit is a grammar rule; rules whose
  utterance-side non-terminals all sit at the right end expand directly,
  anything else goes through an inner search that keeps expanding the
  leading non-terminal (bounded by ``max_depth``) until no non-terminal
  precedes a word.
* word-level: the decoding unit is a word; legality comes from the LR(1)
  automaton, which also recovers the derivation when EOS is accepted.

Scores are raw restricted products of paraphrase-model factors (no
renormalization over the allowed set unless ``renormalize`` is set, and
then only in word-level decoding).  Ties everywhere break by shorter
utterance, then lexicographic token order, so results are deterministic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import lr1
from .grammar import (Derivation, Grammar, NonTerminal, Terminal,
                      expand_rules_for, logical_yield)
from .scoring import Scorer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodeParams:
    beam_size: int = 20
    max_len: int = 64
    max_depth: int = 5
    n_best: int = 20
    renormalize: bool = False

    def __post_init__(self):
        if self.beam_size < 1 or self.max_len < 1 or self.max_depth < 1:
            raise ValueError("beam_size, max_len, max_depth must be >= 1")
        if not 1 <= self.n_best <= self.beam_size:
            raise ValueError("need 1 <= n_best <= beam_size")


@dataclass(frozen=True)
class Candidate:
    utterance: tuple
    logical_form: tuple
    derivation: Derivation
    logp: float


def _rank_key(utterance, logp):
    return (-logp, len(utterance), utterance)


def _nbest(hyps, width, key):
    if width <= 0:
        return []
    return sorted(hyps, key=key)[:width]


def oracle_recall(candidates, gold_lf) -> bool:
    """True iff any candidate's logical form equals ``gold_lf`` exactly."""
    gold = tuple(gold_lf)
    return any(c.logical_form == gold for c in candidates)


# ---------------------------------------------------------------------------
# Rule-level inference


@dataclass(frozen=True)
class Hypothesis:
    """Partial canonical utterance during rule-level search.

    ``tail`` is the unexpanded remainder of the sentential form: terminals
    not yet emitted and pending non-terminals paired with their semantic
    context.  ``rules`` records applied rule ids in leftmost-expansion
    (preorder) order, which fully determines the derivation.
    """

    prefix: tuple = ()
    tail: tuple = ()        # of Terminal | (NonTerminal, ctx)
    logp: float = 0.0
    rules: tuple = ()

    @property
    def full(self) -> bool:
        return not self.tail

    @property
    def clean(self) -> bool:
        """No word is blocked behind a non-terminal (tail is all NTs)."""
        return all(not isinstance(s, Terminal) for s in self.tail)


class _LengthExceeded(Exception):
    pass


def _emit(h: Hypothesis, scorer, source, max_len) -> Hypothesis:
    """Score and move leading terminals of the tail into the prefix."""
    prefix, tail, logp = h.prefix, h.tail, h.logp
    while tail and isinstance(tail[0], Terminal):
        word = tail[0].text
        if len(prefix) + 1 > max_len:
            raise _LengthExceeded
        logp += scorer.score_tokens(source, prefix, [word])[0]
        prefix = prefix + (word,)
        tail = tail[1:]
    return Hypothesis(prefix, tail, logp, h.rules)


def expand(h: Hypothesis, rule, scorer, source, grammar: Grammar,
           max_len: int = 10 ** 9) -> Hypothesis:
    """Substitute ``rule`` for the leftmost pending non-terminal and score
    the words it contributes before the next non-terminal."""
    idx = next(i for i, s in enumerate(h.tail)
               if not isinstance(s, Terminal))
    label = h.tail[idx][0].label
    if rule.lhs != label:
        raise ValueError(f"rule {rule.id} does not expand ${label}")
    ctx = grammar.schema.predicate_of(rule) if grammar.schema else None
    body = tuple(s if isinstance(s, Terminal) else (s, ctx)
                 for s in rule.utt_rhs)
    h2 = Hypothesis(h.prefix, h.tail[:idx] + body + h.tail[idx + 1:],
                    h.logp, h.rules + (rule.id,))
    return _emit(h2, scorer, source, max_len)


def _leftmost_nt(h: Hypothesis):
    for s in h.tail:
        if not isinstance(s, Terminal):
            return s
    return None


def _nts_rightmost(rule) -> bool:
    """All utterance-side non-terminals at the right end of the rule."""
    seen_nt = False
    for s in rule.utt_rhs:
        if isinstance(s, NonTerminal):
            seen_nt = True
        elif seen_nt:
            return False
    return True


def _finish_candidates(g, source, scorer, outputs, n_best):
    result = []
    for h in outputs:
        derivation = _tree_from_preorder(g, h.rules)
        result.append(Candidate(h.prefix, logical_yield(derivation),
                                derivation, h.logp))
    result.sort(key=lambda c: _rank_key(c.utterance, c.logp))
    return result[:n_best]


def _tree_from_preorder(g: Grammar, rule_ids) -> Derivation:
    it = iter(rule_ids)

    def build():
        rule = g.rule_by_id[next(it)]
        children = tuple(build() for _ in rule.utt_nt_positions)
        return Derivation(rule, children)

    root = build()
    if next(it, None) is not None:
        raise ValueError("trailing rules in preorder trace")
    return root


def decode_rule_level(x, g: Grammar, scorer: Scorer,
                      p: DecodeParams = DecodeParams(),
                      trace: Optional[Callable] = None) -> list:
    """Rule-by-rule constrained beam search.

    Completed utterances leave the beam for the output pool, which shrinks
    the surviving beam width accordingly; outputs are never displaced and
    the top ``n_best`` are returned at the end.
    """
    if p.renormalize:
        raise ValueError("renormalize is only supported by word-level "
                         "decoding")
    source = tuple(x)
    key = lambda h: _rank_key(h.prefix, h.logp)
    beam = [Hypothesis(tail=((NonTerminal(g.start), None),))]
    outputs = []
    # The round cap guards against token-free unary rule cycles; every
    # useful round either emits a word (budget max_len) or consumes one of
    # a bounded number of pure-non-terminal expansions.
    for t in range(2 * p.max_len + 64):
        if not beam:
            break
        pool = []
        for h in beam:
            nt = _leftmost_nt(h)
            for rule in expand_rules_for(g, nt[0].label, nt[1]):
                try:
                    h2 = expand(h, rule, scorer, source, g, p.max_len)
                except _LengthExceeded:
                    continue
                if h2.clean:
                    pool.append(h2)
                    continue
                inner = [h2]
                for _ in range(p.max_depth):
                    nxt = []
                    for hh in inner:
                        nt2 = _leftmost_nt(hh)
                        for r2 in expand_rules_for(g, nt2[0].label, nt2[1]):
                            try:
                                h3 = expand(hh, r2, scorer, source, g,
                                            p.max_len)
                            except _LengthExceeded:
                                continue
                            if h3.clean:
                                pool.append(h3)
                            else:
                                nxt.append(h3)
                    inner = _nbest(nxt, p.beam_size, key)
                    if not inner:
                        break
                # Hypotheses still blocked after max_depth inner expansions
                # are discarded.
        beam = _nbest(pool, p.beam_size - len(outputs), key)
        full = [h for h in beam if h.full]
        for h in full:
            outputs.append(Hypothesis(h.prefix, (),
                                      h.logp + scorer.score_eos(source,
                                                                h.prefix),
                                      h.rules))
        beam = [h for h in beam if not h.full]
        if trace:
            trace({"mode": "rule", "step": t, "beam": len(beam),
                   "outputs": len(outputs),
                   "best": beam[0].logp if beam else None})
    if not outputs:
        log.warning("rule-level decoding produced no complete utterance "
                    "within max_len=%d / max_depth=%d", p.max_len,
                    p.max_depth)
    return _finish_candidates(g, source, scorer, outputs, p.n_best)


# ---------------------------------------------------------------------------
# Word-level inference


@dataclass(frozen=True)
class _WordHyp:
    cfg: lr1.AutomatonConfig
    prefix: tuple = ()
    logp: float = 0.0
    dstack: tuple = ()      # partial derivations, bottom-up


def _replay_reductions(g: Grammar, dstack, old_cfg, new_cfg):
    """Fold newly fired reductions into the derivation stack; returns None
    when a reduce violates the semantic schema."""
    schema = g.schema
    stack = list(dstack)
    for rid in new_cfg.reductions[len(old_cfg.reductions):]:
        rule = g.rule_by_id[rid]
        k = len(rule.utt_nt_positions)
        children = tuple(stack[len(stack) - k:]) if k else ()
        if k:
            del stack[len(stack) - k:]
        if schema is not None:
            parent = schema.predicate_of(rule)
            if parent is not None:
                for child in children:
                    if not schema.compatible(parent, child.rule):
                        return None
        stack.append(Derivation(rule, children))
    return tuple(stack)


def decode_word_level(x, g: Grammar, t: lr1.Lr1Table, scorer: Scorer,
                      p: DecodeParams = DecodeParams(),
                      trace: Optional[Callable] = None) -> list:
    """Word-by-word beam search with LR(1) token masking.

    Per hypothesis the candidate set is exactly the automaton-acceptable
    tokens (EOS only when the reduce chain reaches Accept); all of them are
    scored in one batched request.  Schema-incompatible reduces prune the
    hypothesis.
    """
    source = tuple(x)
    key = lambda h: _rank_key(h.prefix, h.logp)
    beam = [_WordHyp(cfg=t.initial_config())]
    outputs = []
    step_no = 0
    while beam:
        pool = []
        for h in beam:
            allowed = sorted(lr1.acceptable_tokens(t, h.cfg))
            eos_ok = lr1.EOS in allowed
            words = [w for w in allowed if w != lr1.EOS]
            if len(h.prefix) >= p.max_len:
                words = []  # at the length cap only EOS can complete
            scored = {}
            batch = list(words)
            if eos_ok and scorer.models_eos:
                batch.append(lr1.EOS)
            if batch:
                values = scorer.score_tokens(source, h.prefix, batch)
                if p.renormalize:
                    norm = math.log(sum(math.exp(v) for v in values))
                    values = [v - norm for v in values]
                scored = dict(zip(batch, values))
            if eos_ok:
                fin = lr1.step(t, h.cfg, lr1.EOS)
                dstack = _replay_reductions(g, h.dstack, h.cfg, fin)
                if dstack is not None:
                    if len(dstack) != 1:
                        raise ValueError("inconsistent derivation stack")
                    d = dstack[0]
                    logp = h.logp + scored.get(lr1.EOS, 0.0)
                    outputs.append(Candidate(h.prefix, logical_yield(d),
                                             d, logp))
            for w in words:
                cfg2 = lr1.step(t, h.cfg, w)
                dstack = _replay_reductions(g, h.dstack, h.cfg, cfg2)
                if dstack is None:
                    continue
                pool.append(_WordHyp(cfg2, h.prefix + (w,),
                                     h.logp + scored[w], dstack))
        beam = _nbest(pool, p.beam_size - len(outputs), key)
        step_no += 1
        if trace:
            trace({"mode": "word", "step": step_no, "beam": len(beam),
                   "outputs": len(outputs),
                   "best": beam[0].logp if beam else None})
    if not outputs:
        log.warning("word-level decoding produced no complete utterance "
                    "within max_len=%d", p.max_len)
    outputs.sort(key=lambda c: _rank_key(c.utterance, c.logp))
    return outputs[:p.n_best]
