"""Scikit-learn style front door for the whole pipeline.

``SynchronousSemanticParser`` wires grammar loading, scorer training,
optional alignment-based reranking, and decoding behind fit/predict so
the parser composes with sklearn tooling (``get_params``, ``clone``,
grid search over decoding parameters, ...).
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from . import lr1
from .alignment import rerank, train_ibm2
from .datagen import sample_cus
from .decoding import DecodeParams, decode_rule_level, decode_word_level
from .grammar import Grammar, load_grammar, parse_grammar, validate_grammar
from .scoring import BigramScorer, Scorer, UniformScorer


def _check_token_sequences(X, name="X"):
    out = []
    for i, seq in enumerate(X):
        if isinstance(seq, str):
            raise ValueError(
                f"{name}[{i}] is a string; pass token lists, e.g. "
                f"{seq.split()!r}")
        toks = tuple(seq)
        if not all(isinstance(t, str) for t in toks):
            raise ValueError(f"{name}[{i}] must contain string tokens")
        out.append(toks)
    return out


class SynchronousSemanticParser(BaseEstimator):
    """Grammar-constrained paraphrase decoding as a fit/predict estimator.

    Parameters mirror the CLI: ``grammar`` is a path, grammar text, or a
    Grammar object; ``scorer`` is ``"uniform"``, ``"bigram"`` (trained on
    the corpus passed to fit, falling back to sampled canonical
    utterances), or any Scorer instance; ``rerank`` adds the
    reconstruction + association reranker, training IBM Model 2 on
    (X, y) pairs when ``y`` is given and on identity pairs over sampled
    canonical utterances otherwise.
    """

    def __init__(self, grammar=None, mode="rule", scorer="bigram",
                 beam_size=20, max_len=64, max_depth=5, n_best=20,
                 renormalize=False, rerank=False, align_epochs=5,
                 sample_size=200, seed=0):
        self.grammar = grammar
        self.mode = mode
        self.scorer = scorer
        self.beam_size = beam_size
        self.max_len = max_len
        self.max_depth = max_depth
        self.n_best = n_best
        self.renormalize = renormalize
        self.rerank = rerank
        self.align_epochs = align_epochs
        self.sample_size = sample_size
        self.seed = seed

    def _resolve_grammar(self) -> Grammar:
        if isinstance(self.grammar, Grammar):
            return self.grammar
        if isinstance(self.grammar, str):
            if "->" in self.grammar:
                return parse_grammar(self.grammar)
            return load_grammar(self.grammar)
        raise ValueError("grammar must be a Grammar, a file path, or "
                         "grammar text")

    def fit(self, X=None, y=None):
        if self.mode not in ("rule", "word"):
            raise ValueError(f"mode must be 'rule' or 'word', got {self.mode}")
        g = self._resolve_grammar()
        report = validate_grammar(g)
        if not report.ok:
            raise ValueError(f"invalid grammar:\n{report}")
        self.grammar_ = g
        self.table_ = lr1.build_lr1(g) if self.mode == "word" else None
        self.params_ = DecodeParams(beam_size=self.beam_size,
                                    max_len=self.max_len,
                                    max_depth=self.max_depth,
                                    n_best=self.n_best,
                                    renormalize=self.renormalize)

        corpus = _check_token_sequences(X) if X is not None else None
        samples = None
        if (self.scorer == "bigram" and corpus is None) or \
                (self.rerank and y is None):
            samples = [r.cu for r in sample_cus(
                g, self.sample_size, self.max_depth, self.seed)]

        if isinstance(self.scorer, Scorer):
            self.scorer_ = self.scorer
        elif self.scorer == "uniform":
            self.scorer_ = UniformScorer(g.terminals)
        elif self.scorer == "bigram":
            self.scorer_ = BigramScorer(corpus if corpus is not None
                                        else samples)
        else:
            raise ValueError(f"unknown scorer: {self.scorer!r}")

        self.align_model_ = None
        if self.rerank:
            if y is not None:
                targets = _check_token_sequences(y, "y")
                if corpus is None or len(corpus) != len(targets):
                    raise ValueError("rerank training needs aligned X and y")
                pairs = list(zip(corpus, targets))
            else:
                pairs = [(cu, cu) for cu in samples]
            self.align_model_ = train_ibm2(pairs, self.align_epochs)
        return self

    def decode(self, X):
        """Candidate lists per input; reranked when ``rerank`` is set."""
        if not hasattr(self, "grammar_"):
            raise RuntimeError("call fit before decode/predict")
        inputs = _check_token_sequences(X)
        results = []
        for x in inputs:
            if self.mode == "word":
                cands = decode_word_level(x, self.grammar_, self.table_,
                                          self.scorer_, self.params_)
            else:
                cands = decode_rule_level(x, self.grammar_, self.scorer_,
                                          self.params_)
            if self.rerank and cands:
                cands = [r.candidate for r in rerank(
                    x, cands, self.scorer_, self.align_model_)]
            results.append(cands)
        return results

    def predict(self, X):
        """Top-1 logical form (token list) per input; None when empty."""
        return [list(cands[0].logical_form) if cands else None
                for cands in self.decode(X)]

    def score(self, X, y):
        """Exact-match accuracy of top-1 logical forms against ``y``."""
        gold = _check_token_sequences(y, "y")
        preds = self.predict(X)
        hits = sum(1 for p, t in zip(preds, gold)
                   if p is not None and tuple(p) == t)
        return hits / len(gold) if gold else 0.0
