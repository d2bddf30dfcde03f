"""A toy word-level GRU encoder-decoder paraphrase model.

The vocabulary is word-level, so the per-word "piece chain rule" used by
subword models collapses to a single factor; scores stay finite for
out-of-vocabulary words through the ``<unk>`` token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import torch
from torch import nn

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)

CHECKPOINT_VERSION = 1


@dataclass
class ServerConfig:
    """Runtime and fine-tuning settings."""

    model_path: str | None = None
    device: str = "cpu"
    max_batch_size: int = 8
    learning_rate: float = 1e-5
    epochs: int = 10
    listen: str | None = None
    stdio: bool = False
    seed: int = 0
    emb_dim: int = 32
    hidden_dim: int = 64
    max_generate_len: int = 16

    def __post_init__(self):
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class Vocab:
    """Word <-> id table with fixed special tokens at the front."""

    def __init__(self, words: Iterable[str] = ()):
        extra = sorted(set(words) - set(SPECIALS))
        self.itos: list[str] = list(SPECIALS) + extra
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def id(self, word: str) -> int:
        return self.stoi.get(word, self.stoi[UNK])

    def encode(self, words: Sequence[str]) -> list[int]:
        return [self.id(w) for w in words]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]


class ParaphraseModel(nn.Module):
    """GRU encoder-decoder over a word vocabulary.

    An empty source sequence conditions the decoder on a zero state, so
    the same network doubles as an unconditional language model.
    """

    models_eos = True
    supports_generation = True

    def __init__(self, vocab: Vocab, config: ServerConfig | None = None):
        super().__init__()
        self.vocab = vocab
        self.config = config or ServerConfig()
        torch.manual_seed(self.config.seed)
        dim, hid = self.config.emb_dim, self.config.hidden_dim
        self.emb = nn.Embedding(len(vocab), dim, padding_idx=0)
        self.encoder = nn.GRU(dim, hid, batch_first=True)
        self.decoder = nn.GRU(dim, hid, batch_first=True)
        self.out = nn.Linear(hid, len(vocab))
        self.to(self.config.device)

    # ---- core network ---------------------------------------------------

    def _encode(self, source: Sequence[str]) -> torch.Tensor:
        """Final encoder state, (1, 1, H); zeros for an empty source."""
        hid = self.config.hidden_dim
        if not source:
            return torch.zeros(1, 1, hid, device=self.emb.weight.device)
        ids = torch.tensor([self.vocab.encode(source)],
                           device=self.emb.weight.device)
        _, state = self.encoder(self.emb(ids))
        return state

    def _decoder_logprobs(self, source: Sequence[str],
                          steps: Sequence[str]) -> torch.Tensor:
        """Log-probability rows for each position after BOS + steps.

        Returns a (len(steps) + 1, V) tensor: row t is the distribution
        over the token following ``steps[:t]``.
        """
        ids = torch.tensor(
            [[self.vocab.id(BOS)] + self.vocab.encode(steps)],
            device=self.emb.weight.device)
        output, _ = self.decoder(self.emb(ids), self._encode(source))
        return torch.log_softmax(self.out(output[0]), dim=-1)

    # ---- scoring API -----------------------------------------------------

    @torch.no_grad()
    def score_next(self, source: Sequence[str], prefix: Sequence[str],
                   candidates: Sequence[str]) -> list[float]:
        self.eval()
        if not candidates:
            return []
        row = self._decoder_logprobs(source, prefix)[-1]
        return [float(row[self.vocab.id(w)]) for w in candidates]

    @torch.no_grad()
    def score_sequence(self, source: Sequence[str],
                       target: Sequence[str]) -> float:
        if not target:
            raise ValueError("target must be non-empty")
        self.eval()
        rows = self._decoder_logprobs(source, target)
        ids = self.vocab.encode(list(target) + [EOS])
        return float(sum(rows[t][ids[t]] for t in range(len(ids))))

    @torch.no_grad()
    def generate_paraphrases(self, source: Sequence[str],
                             n: int) -> list[list[str]]:
        """Deterministic beam search; returns the n best sequences."""
        self.eval()
        if n <= 0:
            return []
        state = self._encode(source)
        banned = [self.vocab.id(w) for w in (PAD, BOS, UNK)]
        # beams: (logp, tokens, decoder state, finished)
        beams = [(0.0, [], state, False)]
        width = max(n, 4)
        for _ in range(self.config.max_generate_len):
            nxt = []
            for logp, toks, st, done in beams:
                if done:
                    nxt.append((logp, toks, st, True))
                    continue
                last = toks[-1] if toks else BOS
                ids = torch.tensor([[self.vocab.id(last)]],
                                   device=self.emb.weight.device)
                output, st2 = self.decoder(self.emb(ids), st)
                row = torch.log_softmax(self.out(output[0, 0]), dim=-1)
                row[banned] = -math.inf
                top = torch.topk(row, min(width, len(self.vocab)))
                for lp, tid in zip(top.values.tolist(),
                                   top.indices.tolist()):
                    word = self.vocab.itos[tid]
                    if word == EOS:
                        nxt.append((logp + lp, toks, st2, True))
                    else:
                        nxt.append((logp + lp, toks + [word], st2, False))
            nxt.sort(key=lambda b: (-b[0], b[1]))
            beams = nxt[:width]
            if all(b[3] for b in beams):
                break
        done = [b for b in beams if b[3]] or beams
        return [list(toks) for _, toks, _, _ in done[:n]]


def save_checkpoint(model: ParaphraseModel, path: str | Path) -> None:
    torch.save({
        "version": CHECKPOINT_VERSION,
        "itos": model.vocab.itos,
        "config": {
            "seed": model.config.seed,
            "emb_dim": model.config.emb_dim,
            "hidden_dim": model.config.hidden_dim,
            "max_generate_len": model.config.max_generate_len,
        },
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path: str | Path,
                    config: ServerConfig | None = None) -> ParaphraseModel:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version: {blob.get('version')!r}")
    config = config or ServerConfig()
    for key, value in blob["config"].items():
        setattr(config, key, value)
    vocab = Vocab(blob["itos"])
    model = ParaphraseModel(vocab, config)
    model.load_state_dict(blob["state_dict"])
    return model
