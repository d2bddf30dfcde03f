"""Earley chart recognizer over the utterance-side CFG.

Used as an oracle independent of the LR(1) automaton: viable-prefix tests
and next-token sets are computed directly from Earley item sets.  The
next-token answers are exact only for validated grammars (every
non-terminal productive and reachable), which is the contract under which
the oracle is invoked.
"""

from __future__ import annotations

from typing import Sequence

from .grammar import Grammar, NonTerminal, Terminal


def _rhs(g: Grammar, rid):
    if rid is None:
        return (NonTerminal(g.start),)
    return g.rule_by_id[rid].utt_rhs


def _columns(g: Grammar, tokens: Sequence[str]):
    """Earley columns; item = (rule_id, dot, origin), rule_id None = start."""
    start_item = (None, 0, 0)
    cols = [set()]
    _add(g, cols, 0, start_item)
    for k, tok in enumerate(tokens):
        nxt = set()
        for rid, dot, origin in cols[k]:
            rhs = _rhs(g, rid)
            if dot < len(rhs) and isinstance(rhs[dot], Terminal) \
                    and rhs[dot].text == tok:
                nxt.add((rid, dot + 1, origin))
        cols.append(set())
        for item in nxt:
            _add(g, cols, k + 1, item)
        if not cols[k + 1]:
            return cols[: k + 2]  # dead column: prefix not viable
    return cols


def _add(g: Grammar, cols, k, item):
    if item in cols[k]:
        return
    cols[k].add(item)
    rid, dot, origin = item
    rhs = _rhs(g, rid)
    if dot < len(rhs):
        sym = rhs[dot]
        if isinstance(sym, NonTerminal):
            # No empty rules exist, so a predicted non-terminal can never
            # already be complete within the same column.
            for r in g.rules_by_lhs.get(sym.label, ()):
                _add(g, cols, k, (r.id, 0, k))
    else:
        lhs = g.start if rid is None else g.rule_by_id[rid].lhs
        for rid2, dot2, origin2 in list(cols[origin]):
            rhs2 = _rhs(g, rid2)
            if dot2 < len(rhs2) and isinstance(rhs2[dot2], NonTerminal) \
                    and rhs2[dot2].label == lhs:
                _add(g, cols, k, (rid2, dot2 + 1, origin2))


def recognizes_prefix(g: Grammar, tokens: Sequence[str]) -> bool:
    """True iff ``tokens`` is a viable prefix of some complete sentence."""
    cols = _columns(g, tokens)
    return len(cols) == len(tokens) + 1 and bool(cols[-1])


def recognizes_sentence(g: Grammar, tokens: Sequence[str]) -> bool:
    cols = _columns(g, tokens)
    if len(cols) != len(tokens) + 1:
        return False
    return (None, 1, 0) in cols[-1]


def next_tokens(g: Grammar, prefix: Sequence[str]):
    """(set of next terminals, eos_ok) extending a viable prefix.

    Returns (empty set, False) when the prefix is not viable.
    """
    cols = _columns(g, prefix)
    if len(cols) != len(prefix) + 1 or not cols[-1]:
        return set(), False
    terminals = set()
    for rid, dot, _ in cols[-1]:
        rhs = _rhs(g, rid)
        if dot < len(rhs) and isinstance(rhs[dot], Terminal):
            terminals.add(rhs[dot].text)
    eos_ok = (None, 1, 0) in cols[-1]
    return terminals, eos_ok
