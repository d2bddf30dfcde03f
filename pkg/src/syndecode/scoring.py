"""Paraphrase-model scoring contract plus built-in and remote scorers.

Built-ins (uniform, bigram) keep the whole test suite runnable with no
model server.  The remote client speaks newline-delimited JSON over TCP:

    {"id": 1, "op": "hello"}
        -> {"id": 1, "capabilities": ["score", "generate", ...]}
    {"id": 2, "op": "score_next", "source": [...], "prefix": [...],
     "candidates": [...]}
        -> {"id": 2, "logprobs": [...]}
    {"id": 3, "op": "score_seq", "source": [...], "target": [...]}
        -> {"id": 3, "logprob": ...}
    {"id": 4, "op": "generate", "source": [...], "n": 2}
        -> {"id": 4, "outputs": [[...], ...]}

Errors come back as {"id": .., "error": "..."}.  All token arrays are
arrays of strings and all scores are log-probabilities (never raw
probabilities).
"""

from __future__ import annotations

import json
import math
import socket
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

EOS = "</s>"
_BOS = "<s>"
_FLOOR = 1e-12  # zero-count probabilities are floored to keep scores finite


class CapabilityError(RuntimeError):
    """The scorer does not support the requested operation."""


class RemoteScorerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScoreRequest:
    source: tuple
    prefix: tuple
    candidates: tuple

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidates must be non-empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("duplicate candidates")


@dataclass(frozen=True)
class ScoreResponse:
    logprobs: tuple

    def __post_init__(self):
        if any(not math.isfinite(v) for v in self.logprobs):
            raise ValueError("non-finite log-probability")


class Scorer:
    """Base contract: next-word log-probabilities given (source, prefix).

    ``models_eos`` says whether the scorer assigns termination probability;
    when False, sequence scores carry no end-of-sequence factor and EOS
    transitions cost nothing during decoding.
    """

    models_eos = False
    supports_generation = False

    def score_next(self, req: ScoreRequest) -> ScoreResponse:
        raise NotImplementedError

    def score_tokens(self, source, prefix, candidates) -> list:
        resp = self.score_next(ScoreRequest(tuple(source), tuple(prefix),
                                            tuple(candidates)))
        if len(resp.logprobs) != len(candidates):
            raise ValueError("response length does not match candidates")
        return list(resp.logprobs)

    def score_eos(self, source, prefix) -> float:
        if not self.models_eos:
            return 0.0
        return self.score_tokens(source, prefix, [EOS])[0]

    def score_sequence(self, source, target) -> float:
        """Chain-rule sum of per-step scores (plus EOS when modeled)."""
        target = tuple(target)
        if not target:
            raise ValueError("target must be non-empty")
        total = 0.0
        for i, tok in enumerate(target):
            total += self.score_tokens(source, target[:i], [tok])[0]
        return total + self.score_eos(source, target)

    def generate_paraphrases(self, source, n: int) -> list:
        raise CapabilityError(
            f"{type(self).__name__} does not support generation")


class UniformScorer(Scorer):
    """log(1/V) for every candidate; V is the vocabulary size.

    Termination is not modeled: EOS (like any other candidate) scores
    log(1/V) when asked directly, but sequence scores carry no EOS term.
    """

    models_eos = False

    def __init__(self, vocab: Sequence[str]):
        self.vocab = tuple(vocab)
        if not self.vocab:
            raise ValueError("empty vocabulary")
        self._logp = -math.log(len(self.vocab))

    def support(self) -> tuple:
        return self.vocab

    def score_next(self, req: ScoreRequest) -> ScoreResponse:
        return ScoreResponse(tuple(self._logp for _ in req.candidates))


class BigramScorer(Scorer):
    """Source-conditioned bigram model trained from a token corpus.

    Next-word probabilities are bigram conditionals reweighted toward the
    source sentence: candidates that occur in the source get their
    probability multiplied by ``exp(source_boost)`` before renormalizing
    over the support, a desk-scale stand-in for a paraphrase model's
    preference to preserve content words.  Contexts with a single
    continuation are unaffected by the boost (the renormalization cancels
    it), so plain conditional frequencies are what you see wherever the
    corpus is deterministic, and the boost is invisible whenever source
    and support are disjoint.

    With ``model_eos`` (default) the distribution at every context covers
    the training vocabulary plus EOS and sentence-final transitions are
    counted; with it off, support is the bare vocabulary.
    """

    def __init__(self, corpus: Sequence[Sequence[str]],
                 smoothing: str = "add1", model_eos: bool = True,
                 source_boost: float = 1.0):
        if smoothing not in ("add1", "none"):
            raise ValueError(f"unknown smoothing: {smoothing}")
        self.smoothing = smoothing
        self.models_eos = model_eos
        self.source_boost = source_boost
        words = sorted({w for sent in corpus for w in sent})
        if not words:
            raise ValueError("empty corpus")
        self.vocab = tuple(words)
        self._support = self.vocab + ((EOS,) if model_eos else ())
        self.bigrams = {}
        self.context_totals = {}
        for sent in corpus:
            toks = list(sent) + ([EOS] if model_eos else [])
            prev = _BOS
            for w in toks:
                self.bigrams[(prev, w)] = self.bigrams.get((prev, w), 0) + 1
                self.context_totals[prev] = self.context_totals.get(prev, 0) + 1
                prev = w

    @classmethod
    def from_file(cls, path, **kwargs) -> "BigramScorer":
        with open(path, encoding="utf-8") as fh:
            corpus = [line.split() for line in fh if line.strip()]
        return cls(corpus, **kwargs)

    def support(self) -> tuple:
        return self._support

    def _context(self, prefix) -> str:
        return prefix[-1] if prefix else _BOS

    def _prob(self, prev: str, word: str) -> float:
        c_bi = self.bigrams.get((prev, word), 0)
        c_ctx = self.context_totals.get(prev, 0)
        if self.smoothing == "add1":
            return (c_bi + 1) / (c_ctx + len(self._support))
        if c_ctx == 0:
            return 0.0
        return c_bi / c_ctx

    def _weight(self, prev: str, word: str, src: frozenset) -> float:
        p = self._prob(prev, word)
        if word in src:
            p *= math.exp(self.source_boost)
        return p

    def score_next(self, req: ScoreRequest) -> ScoreResponse:
        prev = self._context(req.prefix)
        src = frozenset(req.source) if self.source_boost else frozenset()
        # without the boost the bigram conditionals over the support
        # already sum to one, so normalization is only needed when the
        # source actually overlaps the support
        if src & set(self._support):
            z = sum(self._weight(prev, v, src) for v in self._support)
        else:
            z = 1.0
        if z <= 0.0:
            z = 1.0  # unseen unsmoothed context: everything floors anyway
        return ScoreResponse(tuple(
            math.log(max(self._weight(prev, w, src) / z, _FLOOR))
            for w in req.candidates))


class RemoteScorer(Scorer):
    """Client for a model server speaking the NDJSON wire protocol.

    One connection, serialized request/response pairs guarded by a lock;
    responses are matched by request id, so concurrent decode jobs can
    share an instance safely.
    """

    models_eos = True

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._lock = threading.Lock()
        self._sock = None
        self._fh = None
        self._next_id = 0
        self.capabilities = frozenset(self._call("hello")["capabilities"])
        self.supports_generation = "generate" in self.capabilities

    @classmethod
    def from_address(cls, address: str) -> "RemoteScorer":
        host, _, port = address.rpartition(":")
        return cls(host or "127.0.0.1", int(port))

    def _connect(self):
        self._sock = socket.create_connection((self.host, self.port),
                                              timeout=self.timeout)
        self._fh = self._sock.makefile("rw", encoding="utf-8")

    def close(self):
        with self._lock:
            if self._sock is not None:
                self._sock.close()
                self._sock = None
                self._fh = None

    def _call(self, op: str, **payload) -> dict:
        with self._lock:
            if self._sock is None:
                self._connect()
            self._next_id += 1
            rid = self._next_id
            msg = {"id": rid, "op": op, **payload}
            try:
                self._fh.write(json.dumps(msg) + "\n")
                self._fh.flush()
                line = self._fh.readline()
            except OSError as exc:
                raise RemoteScorerError(f"transport failure: {exc}") from exc
        if not line:
            raise RemoteScorerError("connection closed by server")
        resp = json.loads(line)
        if resp.get("id") != rid:
            raise RemoteScorerError(
                f"response id {resp.get('id')} does not match request {rid}")
        if "error" in resp:
            raise RemoteScorerError(resp["error"])
        return resp

    @staticmethod
    def _check_finite(values):
        vals = [float(v) for v in values]
        if any(not math.isfinite(v) for v in vals):
            raise RemoteScorerError("non-finite score from remote scorer")
        return vals

    def score_next(self, req: ScoreRequest) -> ScoreResponse:
        resp = self._call("score_next", source=list(req.source),
                          prefix=list(req.prefix),
                          candidates=list(req.candidates))
        return ScoreResponse(tuple(self._check_finite(resp["logprobs"])))

    def score_sequence(self, source, target) -> float:
        if not tuple(target):
            raise ValueError("target must be non-empty")
        resp = self._call("score_seq", source=list(source),
                          target=list(target))
        return self._check_finite([resp["logprob"]])[0]

    def generate_paraphrases(self, source, n: int) -> list:
        if "generate" not in self.capabilities:
            raise CapabilityError("remote scorer lacks generate capability")
        if n <= 0:
            return []
        resp = self._call("generate", source=list(source), n=n)
        return [list(seq) for seq in resp["outputs"]][:n]


def _bigram_from_spec(rest: str) -> BigramScorer:
    """``<path>[?smoothing=add1|none&eos=true|false&boost=<float>]``"""
    from urllib.parse import parse_qsl

    path, _, query = rest.partition("?")
    kwargs = {}
    for key, value in parse_qsl(query, strict_parsing=bool(query)):
        if key == "smoothing":
            if value not in ("add1", "none"):
                raise ValueError(f"unknown smoothing: {value}")
            kwargs["smoothing"] = value
        elif key == "eos":
            if value not in ("true", "false"):
                raise ValueError(f"bigram eos option must be true or false, "
                                 f"got {value!r}")
            kwargs["model_eos"] = value == "true"
        elif key == "boost":
            kwargs["source_boost"] = float(value)
        else:
            raise ValueError(f"unknown bigram option: {key}")
    return BigramScorer.from_file(path, **kwargs)


def make_scorer(spec: str, grammar=None) -> Scorer:
    """Build a scorer from a CLI spec: ``uniform``,
    ``bigram:<path>[?options]``, or ``remote:<host>:<port>``.  Uniform
    uses the grammar's terminal vocabulary."""
    if spec == "uniform":
        if grammar is None:
            raise ValueError("uniform scorer needs a grammar vocabulary")
        return UniformScorer(grammar.terminals)
    if spec.startswith("bigram:"):
        return _bigram_from_spec(spec[len("bigram:"):])
    if spec.startswith("remote:"):
        return RemoteScorer.from_address(spec[len("remote:"):])
    raise ValueError(f"unknown scorer spec: {spec}")
