"""Reference scoring server for the NDJSON paraphrase-scorer protocol.

The model is a deliberately small word-level GRU encoder-decoder meant
for toy-scale experiments and protocol conformance testing, not for
reproducing large-scale paraphrase quality.
"""

from paraserver.model import (BOS, EOS, PAD, UNK, ParaphraseModel,
                              ServerConfig, Vocab, load_checkpoint,
                              save_checkpoint)
from paraserver.protocol import serve_stream, serve_tcp
from paraserver.training import FinetuneResult, finetune, load_records

__all__ = [
    "BOS", "EOS", "PAD", "UNK",
    "ParaphraseModel", "ServerConfig", "Vocab",
    "load_checkpoint", "save_checkpoint",
    "serve_stream", "serve_tcp",
    "FinetuneResult", "finetune", "load_records",
]
