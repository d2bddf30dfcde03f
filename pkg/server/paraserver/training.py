"""Toy-scale fine-tuning on synthesized grammar data.

Records arrive as JSONL with fields ``cu``, ``lf``, ``paraphrase``,
``origin``.  ``CU`` records train the decoder as an unconditional
language model over the canonical utterance (empty source);
``SelfPara`` records train paraphrase -> canonical utterance
sequence-to-sequence.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from paraserver.model import (BOS, EOS, ParaphraseModel, ServerConfig,
                              Vocab)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Example:
    source: tuple[str, ...]
    target: tuple[str, ...]
    origin: str


@dataclass
class FinetuneResult:
    epoch_losses: list[float] = field(default_factory=list)
    steps_by_objective: dict[str, int] = field(default_factory=dict)


def load_records(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON") from exc
            records.append(obj)
    return records


def _examples(records: Sequence[dict]) -> list[Example]:
    out = []
    for i, rec in enumerate(records):
        origin = rec.get("origin")
        cu = tuple(rec.get("cu") or ())
        if not cu:
            raise ValueError(f"record {i}: empty cu")
        if origin == "CU":
            out.append(Example(source=(), target=cu, origin="CU"))
        elif origin == "SelfPara":
            para = tuple(rec.get("paraphrase") or ())
            if not para:
                raise ValueError(f"record {i}: SelfPara without paraphrase")
            out.append(Example(source=para, target=cu, origin="SelfPara"))
        else:
            raise ValueError(f"record {i}: unknown origin {origin!r}")
    return out


def build_vocab(records: Sequence[dict]) -> Vocab:
    words = set()
    for ex in _examples(records):
        words.update(ex.source)
        words.update(ex.target)
    return Vocab(words)


def _example_loss(model: ParaphraseModel, ex: Example,
                  criterion: nn.Module) -> torch.Tensor:
    vocab = model.vocab
    device = model.emb.weight.device
    inputs = torch.tensor(
        [[vocab.id(BOS)] + vocab.encode(ex.target)], device=device)
    targets = torch.tensor(
        [vocab.encode(list(ex.target) + [EOS])], device=device)
    output, _ = model.decoder(model.emb(inputs), model._encode(ex.source))
    logits = model.out(output[0])
    return criterion(logits, targets[0])


def finetune(model: ParaphraseModel, records: Sequence[dict],
             config: ServerConfig | None = None) -> FinetuneResult:
    """Train in place; returns per-epoch mean losses and objective counts.

    Iteration order is the (deterministic) record order, so repeated runs
    from the same initial weights produce identical checkpoints.
    """
    if not records:
        raise ValueError("dataset must be non-empty")
    config = config or model.config
    examples = _examples(records)
    criterion = nn.CrossEntropyLoss()
    optimizer = torch.optim.Adam(model.parameters(),
                                 lr=config.learning_rate)
    result = FinetuneResult(steps_by_objective={"CU": 0, "SelfPara": 0})
    model.train()
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for start in range(0, len(examples), config.max_batch_size):
            batch = examples[start:start + config.max_batch_size]
            optimizer.zero_grad()
            loss = sum(_example_loss(model, ex, criterion)
                       for ex in batch) / len(batch)
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(batch)
            for ex in batch:
                result.steps_by_objective[ex.origin] += 1
        mean = total / len(examples)
        result.epoch_losses.append(mean)
        log.info("epoch %d/%d: loss %.6f", epoch, config.epochs, mean)
    log.info("objective steps: %s", result.steps_by_objective)
    return result
