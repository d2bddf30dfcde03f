"""IBM Model 2 training, the association score, and Eq.-style reranking."""

import math
import random

import pytest

from conftest import make_random_grammar, language_of
from syndecode import (AlignmentModel, Candidate, UniformScorer,
                       aggregate_score, association_score,
                       reconstruction_score, rerank, train_ibm2)
from syndecode.alignment import (MAX_POS, NULL, PROB_FLOOR, _Direction,
                                 load_pairs)

TABLE4 = [
    # (gen, rec, asso, printed overall), grouped in cases of four
    (-54.2, -3.1, -20.3, -77.6),
    (-72.0, -8.8, -20.3, -101.1),
    (-77.2, -22.4, -31.9, -131.5),
    (-84.2, -26.7, -28.1, -139.0),
    (-62.2, -40.2, -67.1, -169.5),
    (-62.7, -22.1, -62.4, -147.2),
    (-65.0, -21.1, -63.5, -149.6),
    (-67.2, -35.8, -73.3, -176.3),
    (-2.7, -22.1, -62.4, -86.2),
    (-6.0, -21.1, -63.5, -90.6),
    (-18.0, -32.6, -62.8, -113.4),
    (-31.2, -40.2, -67.1, -138.5),
]


def random_pairs(rng, n, max_len=6):
    vocab_x = [f"x{i}" for i in range(8)]
    vocab_c = [f"c{i}" for i in range(8)]
    pairs = []
    for _ in range(n):
        lx = rng.randrange(1, max_len + 1)
        lc = rng.randrange(1, max_len + 1)
        pairs.append((tuple(rng.choice(vocab_x) for _ in range(lx)),
                      tuple(rng.choice(vocab_c) for _ in range(lc))))
    return pairs


def reference_association_score(m, x, c):
    """Independent transcription of the two-direction alignment formula,
    reading the raw tables directly."""

    def one_direction(direction, src, tgt):
        ls, lt = len(src), len(tgt)
        words = [NULL] + list(src)
        key = lambda i: (min(i, MAX_POS), min(ls, MAX_POS), min(lt, MAX_POS))
        total = 0.0
        for i in range(1, lt + 1):
            row = direction.pos.get(key(i))
            if row is None or len(row) != ls + 1:
                row = [1.0 / (ls + 1)] * (ls + 1)
            inner = 0.0
            for j in range(ls + 1):
                lex = direction.lex.get(words[j], {}).get(tgt[i - 1], 0.0)
                inner += max(lex, PROB_FLOOR) * row[j]
            total += math.log(max(inner, PROB_FLOOR))
        return total

    return one_direction(m.fwd, x, c) + one_direction(m.rev, c, x)


class TestTraining:
    def test_single_pair_concentration(self):
        m = train_ibm2([(("dog",), ("chien",))], epochs=5)
        assert m.fwd.lex["dog"]["chien"] >= m.fwd.lex[NULL]["chien"]

    def test_two_pair_convergence(self):
        pairs = [(("a", "b"), ("p", "q")), (("a",), ("p",))]
        m = train_ibm2(pairs, epochs=30)
        assert m.fwd.lex["a"]["p"] > 0.9

    def test_loglik_non_decreasing(self):
        rng = random.Random(41)
        m = train_ibm2(random_pairs(rng, 40), epochs=10)
        for direction in (m.fwd, m.rev):
            assert len(direction.loglik) == 10
            for before, after in zip(direction.loglik,
                                     direction.loglik[1:]):
                assert after >= before - 1e-9

    def test_tables_normalized(self):
        rng = random.Random(43)
        m = train_ibm2(random_pairs(rng, 30), epochs=3)
        for direction in (m.fwd, m.rev):
            for row in direction.lex.values():
                assert sum(row.values()) == pytest.approx(1.0, abs=1e-6)
            for probs in direction.pos.values():
                assert sum(probs) == pytest.approx(1.0, abs=1e-6)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            train_ibm2([], 5)
        with pytest.raises(ValueError):
            train_ibm2([(("a",), ())], 5)
        with pytest.raises(ValueError):
            train_ibm2([(("a",), ("b",))], 0)

    def test_long_sentences_clamp_positions(self):
        x = tuple(f"x{i}" for i in range(40))
        m = train_ibm2([(x, ("c",) * 40)], epochs=1)
        for (i, ls, lt) in m.fwd.pos:
            assert i <= MAX_POS and ls <= MAX_POS and lt <= MAX_POS


class TestAssociationScore:
    def test_uniform_algebra(self):
        v = 5
        lex = {"x0": {"c0": 1 / v}, NULL: {"c0": 1 / v}}
        lex_rev = {"c0": {"x0": 1 / v}, NULL: {"x0": 1 / v}}
        m = AlignmentModel(fwd=_Direction(lex=lex),
                           rev=_Direction(lex=lex_rev))
        got = association_score(m, ("x0",), ("c0",))
        assert got == pytest.approx(2 * math.log(1 / v), abs=1e-12)

    def test_permutation_invariant_with_uniform_positions(self):
        rng = random.Random(47)
        m = train_ibm2(random_pairs(rng, 25), epochs=3)
        stripped = AlignmentModel(
            fwd=_Direction(lex=m.fwd.lex), rev=_Direction(lex=m.rev.lex))
        x = ("x0", "x1", "x2")
        c = ["c0", "c1", "c2", "c3"]
        base = association_score(stripped, x, c)
        rng.shuffle(c)
        assert association_score(stripped, x, c) == pytest.approx(
            base, abs=1e-12)

    def test_matches_clean_room_reference(self):
        rng = random.Random(53)
        m = train_ibm2(random_pairs(rng, 5), epochs=4)
        for _ in range(50):
            x = tuple(rng.choice(["x0", "x1", "x2", "oovx"])
                      for _ in range(rng.randrange(1, 6)))
            c = tuple(rng.choice(["c0", "c1", "c2", "oovc"])
                      for _ in range(rng.randrange(1, 6)))
            assert association_score(m, x, c) == pytest.approx(
                reference_association_score(m, x, c), abs=1e-9)

    def test_empty_sides_rejected(self):
        m = AlignmentModel(fwd=_Direction(), rev=_Direction())
        with pytest.raises(ValueError):
            association_score(m, (), ("c",))

    def test_oov_is_finite(self):
        m = train_ibm2([(("a",), ("b",))], epochs=2)
        assert math.isfinite(association_score(m, ("zzz",), ("qqq",)))


class TestReconstruction:
    def test_uniform_value(self):
        sc = UniformScorer(["a", "b", "c"])
        got = reconstruction_score(sc, ("a", "b", "a", "c"), ("b",))
        assert got == pytest.approx(4 * math.log(1 / 3))

    def test_delegates_to_score_sequence(self, g1_bigram):
        x, c = ("what", "is"), ("state0", "what")
        assert reconstruction_score(g1_bigram, x, c) == \
            g1_bigram.score_sequence(source=c, target=x)


class TestAggregation:
    def test_additivity(self):
        assert aggregate_score(-54.2, -3.1, -20.3) == pytest.approx(-77.6)

    def test_weights(self):
        assert aggregate_score(1.0, 2.0, 3.0, weights=(2, 0, 1)) == 5.0

    def test_case_rankings(self):
        # Within each case the computed totals must reproduce the
        # published ranking.
        for case in range(3):
            rows = TABLE4[case * 4:(case + 1) * 4]
            totals = [aggregate_score(g, r, a) for g, r, a, _ in rows]
            computed = sorted(range(4), key=lambda i: -totals[i])
            # One published overall lost its minus sign in print; its
            # neighbours are all negative, so compare by -|value|.
            published = sorted(range(4), key=lambda i: abs(rows[i][3]))
            assert computed == published

    def test_rank_invariance_under_constant_shift(self):
        totals = [aggregate_score(g, r, a) for g, r, a, _ in TABLE4]
        base = sorted(range(len(totals)), key=lambda i: -totals[i])
        shifted = sorted(range(len(totals)),
                         key=lambda i: -(totals[i] + 123.4))
        assert base == shifted


class TestRerank:
    def test_single_candidate_total(self, g1_bigram):
        rng = random.Random(59)
        m = train_ibm2(random_pairs(rng, 10), epochs=2)
        c = Candidate(("what", "is", "state0"), ("lf",), None, -1.5)
        [r] = rerank(("what", "is"), [c], g1_bigram, m)
        assert r.gen == -1.5
        assert r.total == r.gen + r.rec + r.asso

    def test_constant_offsets_preserve_decoder_order(self):
        # Uniform scorer + uniform model + equal-length candidates add
        # the same rec/asso to every total.
        sc = UniformScorer(["a", "b"])
        lex = {w: {"a": 0.5, "b": 0.5} for w in ("a", "b", NULL)}
        m = AlignmentModel(fwd=_Direction(lex=lex),
                           rev=_Direction(lex=lex))
        cands = [Candidate(("a", "b"), ("1",), None, -1.0),
                 Candidate(("b", "a"), ("2",), None, -2.0),
                 Candidate(("b", "b"), ("3",), None, -3.0)]
        got = rerank(("a", "b"), cands, sc, m)
        assert [r.candidate.logical_form for r in got] == [("1",), ("2",),
                                                           ("3",)]


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = random.Random(61)
        m = train_ibm2(random_pairs(rng, 15), epochs=2)
        path = tmp_path / "model.json"
        m.save(path)
        m2 = AlignmentModel.load(path)
        assert m2.fwd.lex == m.fwd.lex
        assert m2.fwd.pos == m.fwd.pos
        assert m2.rev.loglik == m.rev.loglik
        assert m2.vocab_x == m.vocab_x

    def test_version_check(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"version": 99}')
        with pytest.raises(ValueError):
            AlignmentModel.load(path)


class TestLoadPairs:
    def test_load(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"x": ["a"], "c": ["b"]}\n\n'
                        '{"x": ["c", "d"], "c": ["e"]}\n')
        assert load_pairs(path) == [(("a",), ("b",)), (("c", "d"), ("e",))]

    def test_empty_side_rejected(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"x": [], "c": ["b"]}\n')
        with pytest.raises(ValueError, match="line 1"):
            load_pairs(path)


class TestOnGrammarData:
    def test_identity_pairs_favor_identity(self):
        rng = random.Random(67)
        g = make_random_grammar(rng, n_nts=3, rules_per_nt=2)
        cus = [cu for cu, _ in language_of(g)[:30]]
        m = train_ibm2([(cu, cu) for cu in cus], epochs=5)
        words = sorted({w for cu in cus for w in cu})[:5]
        for w in words:
            assert m.fwd.lex[w].get(w, 0.0) >= \
                max(m.fwd.lex[NULL].get(w, 0.0), 0.0)
