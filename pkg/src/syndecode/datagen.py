"""Synthesis of adaptive fine-tuning data: sampled canonical utterances
and self-paraphrase pairs.

Records are written as JSONL, one object per line with stable field
order: {"cu": [...], "lf": [...], "paraphrase": [...] | null,
"origin": "CU" | "SelfPara"}.  The default sampling sizes follow the
reported per-domain averages (423 canonical utterances, 847 self-
paraphrase instances).
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .grammar import (Grammar, derivation_to_pair, parse_canonical,
                      sample_derivation)
from .scoring import CapabilityError, RemoteScorerError, Scorer

log = logging.getLogger(__name__)

DEFAULT_CU_COUNT = 423
DEFAULT_SELF_PARA_COUNT = 847


@dataclass(frozen=True)
class SynthRecord:
    cu: tuple
    lf: tuple
    paraphrase: Optional[tuple] = None
    origin: str = "CU"

    def __post_init__(self):
        if self.origin not in ("CU", "SelfPara"):
            raise ValueError(f"bad origin: {self.origin}")
        if self.origin == "SelfPara" and self.paraphrase is None:
            raise ValueError("SelfPara records must carry a paraphrase")

    def to_json(self) -> dict:
        return {"cu": list(self.cu), "lf": list(self.lf),
                "paraphrase": list(self.paraphrase)
                if self.paraphrase is not None else None,
                "origin": self.origin}

    @classmethod
    def from_json(cls, obj: dict) -> "SynthRecord":
        para = obj.get("paraphrase")
        return cls(cu=tuple(obj["cu"]), lf=tuple(obj["lf"]),
                   paraphrase=tuple(para) if para is not None else None,
                   origin=obj.get("origin", "CU"))


def sample_cus(g: Grammar, n: int, max_depth: int, seed: int,
               retry_factor: int = 50) -> list:
    """Up to ``n`` distinct canonical utterances sampled from the grammar.

    Every emitted (cu, lf) pair is round-trip checked through
    parse_canonical; schema-violating derivations are never produced by
    the sampler.  Deduplication is by canonical utterance; when the
    grammar cannot yield ``n`` distinct ones within the retry budget a
    partial list is returned with a warning.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    records = []
    seen = set()
    budget = max(retry_factor * n, 100)
    attempts = 0
    while len(records) < n and attempts < budget:
        attempts += 1
        d = sample_derivation(g, max_depth, rng)
        cu, lf = derivation_to_pair(d)
        if cu in seen:
            continue
        if parse_canonical(g, cu) != d:
            raise AssertionError(
                f"sampled derivation fails the round trip: {' '.join(cu)}")
        seen.add(cu)
        records.append(SynthRecord(cu=cu, lf=lf, origin="CU"))
    if len(records) < n:
        log.warning("sampled only %d of %d distinct canonical utterances "
                    "within the retry budget", len(records), n)
    return records


def synth_self_paras(records: Sequence[SynthRecord], scorer: Scorer,
                     k: int) -> list:
    """Paraphrase each canonical utterance with the generation-capable
    scorer, yielding up to ``k`` SelfPara records per input."""
    if not scorer.supports_generation:
        raise CapabilityError("scorer does not support generation")
    out = []
    seen = set()
    if k <= 0:
        return out
    for rec in records:
        try:
            paraphrases = scorer.generate_paraphrases(rec.cu, k)
        except RemoteScorerError as exc:
            log.warning("skipping %r: %s", " ".join(rec.cu), exc)
            continue
        for para in paraphrases:
            para = tuple(para)
            if not para or (rec.cu, para) in seen:
                continue
            seen.add((rec.cu, para))
            out.append(SynthRecord(cu=rec.cu, lf=rec.lf, paraphrase=para,
                                   origin="SelfPara"))
    return out


def export_dataset(records: Sequence[SynthRecord], path,
                   format: str = "jsonl") -> int:
    if format != "jsonl":
        raise ValueError(f"unsupported format: {format}")
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")
            count += 1
    return count


def load_dataset(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(SynthRecord.from_json(json.loads(line)))
    return records
