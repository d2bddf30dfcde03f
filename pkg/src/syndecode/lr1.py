"""Canonical LR(1) automaton over the utterance-side CFG.

The automaton answers, per decoding step, which next words keep the
generated prefix viable.  Construction is the textbook canonical LR(1)
collection (items with one-token lookahead, closure/goto) with an internal
augmented start production.  Conflicts are fatal: a grammar whose
utterance side is not LR(1) cannot be used for word-level decoding
(rule-level decoding still works).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .grammar import Derivation, Grammar, NonTerminal, Terminal

EOS = "</s>"
_END = "$end"       # end-marker lookahead of the augmented grammar
_AUG = None         # rule id of the internal augmented production


class Lr1Conflict(Exception):
    def __init__(self, state: int, token: str, actions):
        self.state = state
        self.token = token
        self.actions = tuple(actions)
        super().__init__(
            f"LR(1) conflict in state {state} on {token!r}: "
            + " vs ".join(map(str, self.actions)))


class RejectedToken(Exception):
    pass


@dataclass(frozen=True)
class AutomatonConfig:
    """A viable utterance prefix: LR state stack + reduction trace."""

    state_stack: tuple
    reductions: tuple = ()
    accepted: bool = False


class Lr1Table:
    """Deterministic action/goto tables.  Immutable and shareable."""

    def __init__(self, grammar: Grammar, states, action, goto):
        self.grammar = grammar
        self.states = states            # list of frozensets of items
        self.action = action            # (state, token) -> ("shift", s) |
        #                                 ("reduce", rule_id) | ("accept",)
        self.goto = goto                # (state, label) -> state

    def initial_config(self) -> AutomatonConfig:
        return AutomatonConfig((0,))

    def to_json(self) -> dict:
        def item_str(item):
            rid, dot, la = item
            return {"rule": rid if rid is not None else "<start>",
                    "dot": dot, "lookahead": la}

        return {
            "states": [[item_str(i) for i in sorted(st, key=repr)]
                       for st in self.states],
            "action": {f"{s} {t}": list(a)
                       for (s, t), a in sorted(self.action.items())},
            "goto": {f"{s} {l}": t
                     for (s, l), t in sorted(self.goto.items())},
        }

    def dump(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _first_sets(g: Grammar):
    """FIRST over utterance-side non-terminals (no empty rules exist)."""
    first = {label: set() for label in g.nonterminals}
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            sym = r.utt_rhs[0]
            add = {sym.text} if isinstance(sym, Terminal) \
                else first[sym.label]
            if not add <= first[r.lhs]:
                first[r.lhs] |= add
                changed = True
    return first


def _rhs(g: Grammar, rid):
    if rid is _AUG:
        return (NonTerminal(g.start),)
    return g.rule_by_id[rid].utt_rhs


def _closure(g: Grammar, first, items):
    out = set(items)
    agenda = list(items)
    while agenda:
        rid, dot, la = agenda.pop()
        rhs = _rhs(g, rid)
        if dot >= len(rhs) or not isinstance(rhs[dot], NonTerminal):
            continue
        # Lookaheads for predicted rules: FIRST of what follows the dot;
        # no symbol can derive the empty string, so beta non-empty ends it.
        if dot + 1 < len(rhs):
            nxt = rhs[dot + 1]
            lookaheads = {nxt.text} if isinstance(nxt, Terminal) \
                else first[nxt.label]
        else:
            lookaheads = {la}
        for r in g.rules_by_lhs.get(rhs[dot].label, ()):
            for la2 in lookaheads:
                item = (r.id, 0, la2)
                if item not in out:
                    out.add(item)
                    agenda.append(item)
    return frozenset(out)


def build_lr1(g: Grammar) -> Lr1Table:
    """Canonical LR(1) construction; raises :class:`Lr1Conflict`."""
    first = _first_sets(g)
    start_state = _closure(g, first, {(_AUG, 0, _END)})
    states = [start_state]
    index = {start_state: 0}
    goto_sym = {}  # (state_id, symbol key) -> state_id
    frontier = [0]
    while frontier:
        sid = frontier.pop(0)
        moves = {}
        for rid, dot, la in states[sid]:
            rhs = _rhs(g, rid)
            if dot < len(rhs):
                sym = rhs[dot]
                key = ("t", sym.text) if isinstance(sym, Terminal) \
                    else ("n", sym.label)
                moves.setdefault(key, set()).add((rid, dot + 1, la))
        for key in sorted(moves):
            nxt = _closure(g, first, moves[key])
            if nxt not in index:
                index[nxt] = len(states)
                states.append(nxt)
                frontier.append(index[nxt])
            goto_sym[(sid, key)] = index[nxt]

    action = {}
    goto = {}
    conflicts = []

    def put(sid, token, act):
        prev = action.get((sid, token))
        if prev is not None and prev != act:
            conflicts.append(Lr1Conflict(sid, token, [prev, act]))
            return
        action[(sid, token)] = act

    for (sid, key), tid in goto_sym.items():
        kind, name = key
        if kind == "t":
            put(sid, name, ("shift", tid))
        else:
            goto[(sid, name)] = tid
    for sid, state in enumerate(states):
        for rid, dot, la in state:
            if dot != len(_rhs(g, rid)):
                continue
            if rid is _AUG:
                put(sid, _END, ("accept",))
            else:
                put(sid, la, ("reduce", rid))
    if conflicts:
        raise conflicts[0]
    return Lr1Table(g, states, action, goto)


def _drive(t: Lr1Table, cfg: AutomatonConfig, token: str):
    """Reduce under lookahead ``token`` until a shift (or accept) applies."""
    if cfg.accepted:
        raise RejectedToken("configuration already accepted EOS")
    lookahead = _END if token == EOS else token
    stack = list(cfg.state_stack)
    reds = list(cfg.reductions)
    g = t.grammar
    while True:
        act = t.action.get((stack[-1], lookahead))
        if act is None:
            raise RejectedToken(f"no action on {token!r}")
        if act[0] == "shift":
            stack.append(act[1])
            return AutomatonConfig(tuple(stack), tuple(reds))
        if act[0] == "accept":
            if token != EOS:
                raise RejectedToken(f"no action on {token!r}")
            return AutomatonConfig(tuple(stack), tuple(reds), accepted=True)
        rule = g.rule_by_id[act[1]]
        del stack[len(stack) - len(rule.utt_rhs):]
        nxt = t.goto.get((stack[-1], rule.lhs))
        if nxt is None:  # unreachable for table-produced configs
            raise RejectedToken(f"missing goto after reducing {rule.id}")
        stack.append(nxt)
        reds.append(rule.id)


def step(t: Lr1Table, cfg: AutomatonConfig, token: str) -> AutomatonConfig:
    """Consume one word (or :data:`EOS`): apply pending reduces, then shift.

    Raises :class:`RejectedToken` when no reduce chain ends in a shift on
    ``token``.  Passing :data:`EOS` returns an accepted configuration.
    """
    return _drive(t, cfg, token)


def acceptable_tokens(t: Lr1Table, cfg: AutomatonConfig) -> set:
    """Exactly the tokens for which :func:`step` succeeds, EOS included
    iff the reduce chain on end-of-input reaches Accept."""
    ok = set()
    for token in t.grammar.terminals + (EOS,):
        try:
            _drive(t, cfg, token)
        except RejectedToken:
            continue
        ok.add(token)
    return ok


def config_to_derivation(g: Grammar, cfg: AutomatonConfig,
                         tokens: Optional[Sequence[str]] = None) -> Derivation:
    """Replay an accepted configuration's reductions into a Derivation.

    The reduction sequence is a reverse rightmost derivation, so rebuilding
    bottom-up with a child stack is exact.  When ``tokens`` is given the
    utterance yield is checked against it.
    """
    if not cfg.accepted:
        raise ValueError("configuration has not accepted EOS")
    stack = []
    for rid in cfg.reductions:
        rule = g.rule_by_id[rid]
        k = len(rule.utt_nt_positions)
        children = tuple(stack[len(stack) - k:]) if k else ()
        if k:
            del stack[len(stack) - k:]
        stack.append(Derivation(rule, children))
    if len(stack) != 1:
        raise ValueError(f"inconsistent reduction trace: {cfg.reductions}")
    d = stack[0]
    if tokens is not None:
        from .grammar import utterance_yield

        if utterance_yield(d) != tuple(tokens):
            raise ValueError("derivation yield does not match tokens")
    return d
