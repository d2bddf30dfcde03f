"""Synchronous context-free grammars: loading, validation, derivations.

A grammar file is line based::

    start: $root
    schema: schema.json          # optional, path relative to the grammar file
    # full-line comments start with '#'
    $root -> what is $state ||| answer ( $state )
    @my_id $state -> state0 ||| state0

Tokens are whitespace separated.  Non-terminals are prefixed with ``$``;
when the same label occurs more than once on a side the occurrences must be
disambiguated with ``#k`` suffixes (``$e#1 ... $e#2``) on both sides so the
alignment stays a bijection.  Rule ids default to ``<lhs>_<n>`` (without the
``$``) and can be overridden with a leading ``@id`` tag, which is what schema
annotations refer to.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union


class GrammarError(ValueError):
    """Base class for grammar loading and usage errors."""


class GrammarSyntaxError(GrammarError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownLabelError(GrammarError):
    pass


class NoParseError(GrammarError):
    pass


class AmbiguousParseError(GrammarError):
    pass


class IncompleteDerivationError(GrammarError):
    pass


class DeadEndError(GrammarError):
    pass


@dataclass(frozen=True)
class Terminal:
    text: str

    def __post_init__(self):
        if not self.text or any(ch.isspace() for ch in self.text):
            raise GrammarError(f"bad terminal text: {self.text!r}")


@dataclass(frozen=True)
class NonTerminal:
    label: str
    occurrence: int = 1

    def __post_init__(self):
        if self.occurrence < 1:
            raise GrammarError("non-terminal occurrence must be >= 1")


Symbol = Union[Terminal, NonTerminal]


@dataclass(frozen=True)
class ProductionRule:
    """One synchronous rule ``lhs -> <utt_rhs, lf_rhs>``.

    ``nt_links`` maps positions of non-terminals in ``utt_rhs`` to their
    aligned positions in ``lf_rhs``.
    """

    id: str
    lhs: str
    utt_rhs: tuple
    lf_rhs: tuple
    nt_links: tuple  # ((utt_pos, lf_pos), ...) ordered by utt_pos

    def __post_init__(self):
        if not self.utt_rhs or not self.lf_rhs:
            raise GrammarError(f"rule {self.id}: empty right-hand side")

    @property
    def utt_nt_positions(self) -> tuple:
        return tuple(i for i, s in enumerate(self.utt_rhs)
                     if isinstance(s, NonTerminal))

    @property
    def nt_labels(self) -> tuple:
        """Labels of utterance-side non-terminals, in utt_rhs order."""
        return tuple(self.utt_rhs[i].label for i in self.utt_nt_positions)

    def lf_child_index(self, lf_pos: int) -> int:
        """Child index (utt order) for the non-terminal at lf_rhs[lf_pos]."""
        for utt_pos, lp in self.nt_links:
            if lp == lf_pos:
                return self.utt_nt_positions.index(utt_pos)
        raise GrammarError(f"rule {self.id}: lf position {lf_pos} not linked")


@dataclass(frozen=True)
class RuleAnnotation:
    predicate: str
    result_type: str
    argument_types: tuple = ()


@dataclass(frozen=True)
class SemanticSchema:
    """Allow-list of (predicate, argument type) pairs plus rule annotations."""

    allowed: frozenset
    rule_annotations: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict) -> "SemanticSchema":
        allowed = frozenset((p, t) for p, t in obj.get("allowed", []))
        annotations = {}
        for rid, ann in obj.get("rules", {}).items():
            annotations[rid] = RuleAnnotation(
                predicate=ann["predicate"],
                result_type=ann["result_type"],
                argument_types=tuple(ann.get("argument_types", ())),
            )
        return cls(allowed=allowed, rule_annotations=annotations)

    @classmethod
    def from_file(cls, path) -> "SemanticSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def compatible(self, parent_predicate: Optional[str],
                   rule: ProductionRule) -> bool:
        """Is ``rule`` usable to expand a child of ``parent_predicate``?

        Rules without an annotation, or expansions without a semantic
        context, are never filtered.
        """
        if parent_predicate is None:
            return True
        ann = self.rule_annotations.get(rule.id)
        if ann is None:
            return True
        return (parent_predicate, ann.result_type) in self.allowed

    def predicate_of(self, rule: ProductionRule) -> Optional[str]:
        ann = self.rule_annotations.get(rule.id)
        return ann.predicate if ann is not None else None


class Grammar:
    """An SCFG: start label, rules, optional semantic schema.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, start: str, rules: Sequence[ProductionRule],
                 schema: Optional[SemanticSchema] = None,
                 schema_path: Optional[str] = None):
        self.start = start
        self.rules = tuple(rules)
        self.schema = schema
        self.schema_path = schema_path
        self.rule_by_id = {}
        self.rules_by_lhs = {}
        for r in self.rules:
            if r.id in self.rule_by_id:
                raise GrammarError(f"duplicate rule id: {r.id}")
            self.rule_by_id[r.id] = r
            self.rules_by_lhs.setdefault(r.lhs, []).append(r)

    @property
    def nonterminals(self) -> set:
        labels = set(self.rules_by_lhs)
        for r in self.rules:
            labels.update(s.label for s in r.utt_rhs + r.lf_rhs
                          if isinstance(s, NonTerminal))
        return labels

    @property
    def terminals(self) -> tuple:
        """Utterance-side terminal vocabulary, sorted."""
        vocab = {s.text for r in self.rules for s in r.utt_rhs
                 if isinstance(s, Terminal)}
        return tuple(sorted(vocab))

    def with_schema(self, schema: Optional[SemanticSchema]) -> "Grammar":
        return Grammar(self.start, self.rules, schema=schema)


@dataclass(frozen=True)
class Derivation:
    """A complete tree of rule applications.

    ``children`` has one entry per utterance-side non-terminal of ``rule``,
    in utt_rhs order.
    """

    rule: ProductionRule
    children: tuple = ()

    def __post_init__(self):
        positions = self.rule.utt_nt_positions
        if len(self.children) != len(positions):
            raise IncompleteDerivationError(
                f"rule {self.rule.id} needs {len(positions)} children, "
                f"got {len(self.children)}")
        for pos, child in zip(positions, self.children):
            if child.rule.lhs != self.rule.utt_rhs[pos].label:
                raise GrammarError(
                    f"rule {self.rule.id}: child {child.rule.id} does not "
                    f"expand {self.rule.utt_rhs[pos].label}")

    def to_json(self) -> dict:
        return {"rule_id": self.rule.id,
                "children": [c.to_json() for c in self.children]}

    @classmethod
    def from_json(cls, g: Grammar, obj: dict) -> "Derivation":
        rule = g.rule_by_id[obj["rule_id"]]
        children = tuple(cls.from_json(g, c) for c in obj.get("children", []))
        return cls(rule, children)


@dataclass
class ValidationReport:
    entries: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.entries

    def __str__(self) -> str:
        return "valid" if self.ok else "\n".join(self.entries)


# ---------------------------------------------------------------------------
# Parsing the grammar file format


def _parse_symbol(token: str) -> Symbol:
    if not token.startswith("$"):
        return Terminal(token)
    body = token[1:]
    if "#" in body:
        label, _, tag = body.partition("#")
        if not label or not tag.isdigit() or int(tag) < 1:
            raise GrammarError(f"bad non-terminal token: {token!r}")
        return NonTerminal(label, int(tag))
    if not body:
        raise GrammarError(f"bad non-terminal token: {token!r}")
    return NonTerminal(body, 1)


def _side_nt_keys(symbols, line_no: int):
    """(label, occurrence) -> position, erroring on duplicates."""
    keys = {}
    untagged = {}
    for pos, s in enumerate(symbols):
        if not isinstance(s, NonTerminal):
            continue
        key = (s.label, s.occurrence)
        if key in keys:
            raise GrammarSyntaxError(
                f"over-linked non-terminal: ${s.label} occurs more than "
                f"once without distinct #k tags", line_no)
        keys[key] = pos
        untagged.setdefault(s.label, 0)
        untagged[s.label] += 1
    return keys


def _parse_rule_line(line: str, line_no: int, auto_ids: dict) -> ProductionRule:
    rule_id = None
    rest = line
    if line.startswith("@"):
        tag, _, rest = line.partition(" ")
        rule_id = tag[1:]
        if not rule_id:
            raise GrammarSyntaxError("empty rule id after '@'", line_no)
    if "->" not in rest or "|||" not in rest:
        raise GrammarSyntaxError(
            "expected 'LHS -> utt tokens ||| lf tokens'", line_no)
    lhs_text, _, rhs_text = rest.partition("->")
    utt_text, _, lf_text = rhs_text.partition("|||")
    lhs_tok = lhs_text.split()
    if len(lhs_tok) != 1 or not lhs_tok[0].startswith("$"):
        raise GrammarSyntaxError("left-hand side must be one $label", line_no)
    lhs = lhs_tok[0][1:]
    try:
        utt_rhs = tuple(_parse_symbol(t) for t in utt_text.split())
        lf_rhs = tuple(_parse_symbol(t) for t in lf_text.split())
    except GrammarError as exc:
        raise GrammarSyntaxError(str(exc), line_no) from exc
    if not utt_rhs or not lf_rhs:
        raise GrammarSyntaxError("both rule sides must be non-empty", line_no)

    utt_keys = _side_nt_keys(utt_rhs, line_no)
    lf_keys = _side_nt_keys(lf_rhs, line_no)
    if set(utt_keys) != set(lf_keys):
        only_utt = set(utt_keys) - set(lf_keys)
        only_lf = set(lf_keys) - set(utt_keys)
        bad = sorted(only_utt | only_lf)
        label, occ = bad[0]
        raise GrammarSyntaxError(
            f"unlinked non-terminal occurrence: ${label}#{occ}", line_no)
    links = tuple(sorted((utt_keys[k], lf_keys[k]) for k in utt_keys))

    if rule_id is None:
        auto_ids.setdefault(lhs, 0)
        auto_ids[lhs] += 1
        rule_id = f"{lhs}_{auto_ids[lhs]}"
    try:
        return ProductionRule(rule_id, lhs, utt_rhs, lf_rhs, links)
    except GrammarError as exc:
        raise GrammarSyntaxError(str(exc), line_no) from exc


def parse_grammar(text: str) -> Grammar:
    """Parse grammar file contents.  Syntactic checks only; see
    :func:`validate_grammar` for productivity/reachability."""
    start = None
    schema_path = None
    rules = []
    auto_ids: dict = {}
    seen_ids = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("start:"):
            tok = line[len("start:"):].split()
            if len(tok) != 1 or not tok[0].startswith("$"):
                raise GrammarSyntaxError("start: expects one $label", line_no)
            start = tok[0][1:]
            continue
        if line.startswith("schema:"):
            schema_path = line[len("schema:"):].strip()
            continue
        rule = _parse_rule_line(line, line_no, auto_ids)
        if rule.id in seen_ids:
            raise GrammarSyntaxError(f"duplicate rule id: {rule.id}", line_no)
        seen_ids.add(rule.id)
        rules.append(rule)
    if not rules:
        raise GrammarSyntaxError("no rules found", 1)
    if start is None:
        start = rules[0].lhs
    return Grammar(start, rules, schema_path=schema_path)


def load_grammar(path, schema_path=None) -> Grammar:
    """Read a grammar file and, when present, its schema file."""
    import os

    with open(path, encoding="utf-8") as fh:
        g = parse_grammar(fh.read())
    sp = schema_path or g.schema_path
    if sp:
        if not os.path.isabs(sp):
            sp = os.path.join(os.path.dirname(os.path.abspath(path)), sp)
        g = Grammar(g.start, g.rules, schema=SemanticSchema.from_file(sp),
                    schema_path=g.schema_path)
    return g


# ---------------------------------------------------------------------------
# Validation


def validate_grammar(g: Grammar) -> ValidationReport:
    report = ValidationReport()

    # Productivity: fixpoint over rules whose rhs non-terminals are productive.
    productive = set()
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            if r.lhs in productive:
                continue
            if all(s.label in productive for s in r.utt_rhs
                   if isinstance(s, NonTerminal)):
                productive.add(r.lhs)
                changed = True
    for label in sorted(g.nonterminals - productive):
        report.entries.append(f"unproductive: ${label}")

    # Reachability from the start symbol.
    reachable = {g.start}
    frontier = [g.start]
    while frontier:
        label = frontier.pop()
        for r in g.rules_by_lhs.get(label, ()):
            for s in r.utt_rhs:
                if isinstance(s, NonTerminal) and s.label not in reachable:
                    reachable.add(s.label)
                    frontier.append(s.label)
    unreachable = sorted({r.lhs for r in g.rules} - reachable)
    for label in unreachable:
        report.entries.append(f"unreachable: ${label}")

    if g.schema is not None:
        for rid in sorted(g.schema.rule_annotations):
            if rid not in g.rule_by_id:
                report.entries.append(f"schema annotates unknown rule: {rid}")
    return report


# ---------------------------------------------------------------------------
# Queries and yields


def expand_rules_for(g: Grammar, label: str,
                     ctx: Optional[str] = None) -> list:
    """Rules with lhs ``label`` compatible with semantic context ``ctx``.

    ``ctx`` is the predicate of the parent rule (or None when unconstrained).
    """
    if label not in g.rules_by_lhs:
        raise UnknownLabelError(f"unknown non-terminal: ${label}")
    rules = g.rules_by_lhs[label]
    if g.schema is None or ctx is None:
        return list(rules)
    return [r for r in rules if g.schema.compatible(ctx, r)]


def utterance_yield(d: Derivation) -> tuple:
    out = []
    child = iter(d.children)
    for s in d.rule.utt_rhs:
        if isinstance(s, Terminal):
            out.append(s.text)
        else:
            out.extend(utterance_yield(next(child)))
    return tuple(out)


def logical_yield(d: Derivation) -> tuple:
    out = []
    for pos, s in enumerate(d.rule.lf_rhs):
        if isinstance(s, Terminal):
            out.append(s.text)
        else:
            out.extend(logical_yield(d.children[d.rule.lf_child_index(pos)]))
    return tuple(out)


def derivation_to_pair(d: Derivation) -> tuple:
    """(canonical utterance tokens, logical form tokens) of a complete tree."""
    return utterance_yield(d), logical_yield(d)


# ---------------------------------------------------------------------------
# Canonical-utterance parsing (general chart over spans)


def _match_rhs(g: Grammar, rhs, k, i, j, table, cap):
    """All ways rhs[k:] derives tokens[i:j]; returns lists of child trees."""
    if k == len(rhs):
        return [[]] if i == j else []
    sym = rhs[k]
    results = []
    if isinstance(sym, Terminal):
        if i < j and table["tokens"][i] == sym.text:
            for tail in _match_rhs(g, rhs, k + 1, i + 1, j, table, cap):
                results.append(tail)
                if len(results) > cap:
                    return results
        return results
    for m in range(i + 1, j + 1):
        subs = table["spans"].get((sym.label, i, m), ())
        if not subs:
            continue
        tails = _match_rhs(g, rhs, k + 1, m, j, table, cap)
        for sub in subs:
            for tail in tails:
                results.append([sub] + tail)
                if len(results) > cap:
                    return results
    return results


def _parse_all(g: Grammar, tokens, cap: int = 2) -> list:
    """Up to ``cap + 1`` derivations whose utterance yield equals tokens.

    Bottom-up over span length; single-non-terminal rules (the only ones
    that keep the span size) are closed iteratively, with a growth bound
    that flags unit cycles as ambiguity.
    """
    n = len(tokens)
    if n == 0:
        return []
    table = {"tokens": tuple(tokens), "spans": {}}
    labels = sorted(g.rules_by_lhs)
    for length in range(1, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            for label in labels:
                cell = []
                for r in g.rules_by_lhs[label]:
                    if len(r.utt_rhs) == 1 and isinstance(r.utt_rhs[0],
                                                          NonTerminal):
                        continue  # unit rules handled in the closure below
                    for kids in _match_rhs(g, r.utt_rhs, 0, i, j, table, cap):
                        cell.append(Derivation(r, tuple(kids)))
                table["spans"][(label, i, j)] = cell
            # Unit-rule closure within this span.
            for _ in range(len(labels) + 1):
                grew = False
                for label in labels:
                    cell = table["spans"][(label, i, j)]
                    if len(cell) > cap:
                        continue
                    for r in g.rules_by_lhs[label]:
                        if not (len(r.utt_rhs) == 1
                                and isinstance(r.utt_rhs[0], NonTerminal)):
                            continue
                        subs = table["spans"].get(
                            (r.utt_rhs[0].label, i, j), ())
                        for sub in subs:
                            d = Derivation(r, (sub,))
                            if d not in cell:
                                cell.append(d)
                                grew = True
                if not grew:
                    break
            else:
                # Still growing after |labels| rounds: unit cycle.
                for label in labels:
                    cell = table["spans"][(label, i, j)]
                    if cell:
                        cell.append(cell[0])
    return table["spans"].get((g.start, 0, n), [])[: cap + 1]


def parse_canonical(g: Grammar, tokens: Sequence[str]) -> Derivation:
    """The unique derivation whose utterance yield equals ``tokens``.

    Raises :class:`NoParseError` / :class:`AmbiguousParseError`; ambiguity
    is reported, never silently resolved.
    """
    found = _parse_all(g, tuple(tokens), cap=1)
    if not found:
        raise NoParseError(f"no parse: {' '.join(tokens)!r}")
    if len(found) > 1:
        raise AmbiguousParseError(
            f"ambiguous parse ({len(found)}+ derivations): "
            f"{' '.join(tokens)!r}")
    return found[0]


# ---------------------------------------------------------------------------
# Sampling and enumeration


def _min_depths(g: Grammar):
    """Minimal completion depth per non-terminal and per rule.

    A rule of only terminals has depth 0; otherwise 1 + max over children.
    """
    inf = float("inf")
    nt_depth = {label: inf for label in g.nonterminals}
    rule_depth = {r.id: inf for r in g.rules}
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            labels = r.nt_labels
            d = 0 if not labels else 1 + max(nt_depth[x] for x in labels)
            if d < rule_depth[r.id]:
                rule_depth[r.id] = d
                changed = True
            if d < nt_depth[r.lhs]:
                nt_depth[r.lhs] = d
                changed = True
    return nt_depth, rule_depth


def _sample(g: Grammar, label, ctx, depth, max_depth, rule_depth, rng):
    budget = max_depth - depth
    eligible = [r for r in expand_rules_for(g, label, ctx)
                if rule_depth[r.id] <= budget]
    if not eligible:
        raise DeadEndError(
            f"no rule for ${label} completes within depth budget {budget}")
    rule = eligible[rng.randrange(len(eligible))]
    child_ctx = g.schema.predicate_of(rule) if g.schema else None
    children = tuple(
        _sample(g, child_label, child_ctx, depth + 1, max_depth,
                rule_depth, rng)
        for child_label in rule.nt_labels)
    return Derivation(rule, children)


def sample_derivation(g: Grammar, max_depth: int, rng_seed: int,
                      retries: int = 20) -> Derivation:
    """Sample a complete derivation, expanding leftmost non-terminals
    uniformly at random among schema-compatible rules.

    Rules are eligible only when their minimal completion depth fits the
    remaining budget, so the depth cap cannot strand the sampler; schema
    filtering can still dead-end, hence the bounded retry loop.
    """
    if max_depth < 1:
        raise GrammarError("max_depth must be >= 1")
    rng = rng_seed if isinstance(rng_seed, random.Random) \
        else random.Random(rng_seed)
    _, rule_depth = _min_depths(g)
    last = None
    for _ in range(retries):
        try:
            return _sample(g, g.start, None, 0, max_depth, rule_depth, rng)
        except DeadEndError as exc:
            last = exc
    raise last


def enumerate_derivations(g: Grammar, max_depth: int = 64,
                          limit: int = 10000) -> Iterator[Derivation]:
    """All complete derivations up to ``max_depth``, deterministic order."""
    _, rule_depth = _min_depths(g)

    def walk(label, ctx, depth):
        for r in expand_rules_for(g, label, ctx):
            if rule_depth[r.id] > max_depth - depth:
                continue
            child_ctx = g.schema.predicate_of(r) if g.schema else None
            yield from expand_children(r, r.nt_labels, (), child_ctx, depth)

    def expand_children(rule, remaining, done, ctx, depth):
        if not remaining:
            yield Derivation(rule, done)
            return
        for child in walk(remaining[0], ctx, depth + 1):
            yield from expand_children(rule, remaining[1:], done + (child,),
                                       ctx, depth)

    for count, d in enumerate(walk(g.start, None, 0)):
        if count >= limit:
            return
        yield d
