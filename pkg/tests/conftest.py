"""Shared fixtures: the G1 toy grammar, scorers over its language, and a
deterministic random-grammar factory used by the property tests.

Generated grammars give every rule a unique leading terminal, which makes
them unambiguous and conflict-free for the LR(1) construction, and order
non-terminals acyclically so the generated language is finite and can be
enumerated exactly.
"""

import random

import pytest

from syndecode import (BigramScorer, UniformScorer, enumerate_derivations,
                       parse_grammar, utterance_yield)
from syndecode.lr1 import build_lr1

G1_TEXT = """\
start: $root
$root -> what is $state ||| answer ( $state )
$state -> state that $city located in ||| state ( loc_1 ( $city ) )
$state -> state0 ||| state0
$city -> city0 ||| city0
"""

G1_SENTENCES = (
    ("what", "is", "state", "that", "city0", "located", "in"),
    ("what", "is", "state0"),
)

FIGURE3_INPUT = ("which", "state", "is", "city0", "in")
FIGURE3_CU = G1_SENTENCES[0]
FIGURE3_LF = ("answer", "(", "state", "(", "loc_1", "(", "city0", ")",
              ")", ")")


@pytest.fixture(scope="session")
def g1():
    return parse_grammar(G1_TEXT)


@pytest.fixture(scope="session")
def g1_table(g1):
    return build_lr1(g1)


@pytest.fixture(scope="session")
def g1_bigram():
    """Unsmoothed bigram over G1's two sentences, the scorer used for the
    end-to-end checks."""
    return BigramScorer([list(s) for s in G1_SENTENCES], smoothing="none")


@pytest.fixture(scope="session")
def g1_uniform(g1):
    return UniformScorer(g1.terminals)


def make_random_grammar(rng: random.Random, n_nts: int = 4,
                        rules_per_nt: int = 2, max_body: int = 3):
    """Build a random unambiguous grammar with a finite language.

    Each rule starts with a terminal unique across the grammar, so any
    sentence identifies its derivation left to right.  Rule bodies only
    reference strictly later non-terminals, so there is no recursion.
    The logical side reuses the leading terminal plus the linked
    non-terminals, keeping the pairing deterministic per rule.
    """
    labels = [f"n{i}" for i in range(n_nts)]
    lines = [f"start: ${labels[0]}"]
    marker = 0
    for idx, label in enumerate(labels):
        later = labels[idx + 1:]
        for rule_no in range(rules_per_nt):
            marker += 1
            head = f"t{marker}"
            body = [head]
            nts = []
            if later and rule_no == 0:
                # keep every non-terminal reachable from the start symbol
                nts.append(later[0])
                body.append(f"${later[0]}#1")
            for _ in range(rng.randrange(max_body)):
                if later and rng.random() < 0.5:
                    nt = rng.choice(later)
                    nts.append(nt)
                    occ = sum(1 for n in nts if n == nt)
                    body.append(f"${nt}#{occ}")
                else:
                    body.append(f"w{rng.randrange(6)}")
            lf = [f"{head}_lf", "("]
            for i, nt in enumerate(nts):
                occ = sum(1 for n in nts[: i + 1] if n == nt)
                lf.append(f"${nt}#{occ}")
            lf.append(")")
            lines.append(f"${label} -> {' '.join(body)} ||| {' '.join(lf)}")
    return parse_grammar("\n".join(lines) + "\n")


def language_of(grammar, limit: int = 5000):
    """Every (utterance, derivation) in a finite grammar's language."""
    derivs = list(enumerate_derivations(grammar, max_depth=50, limit=limit))
    assert len(derivs) < limit, "grammar language unexpectedly large"
    return [(utterance_yield(d), d) for d in derivs]
