"""Grammar-constrained paraphrase decoding for unsupervised semantic
parsing: synchronous grammars, LR(1)-masked and rule-level beam search,
alignment-based reranking, and fine-tuning data synthesis."""

from .alignment import (AlignmentModel, RerankedCandidate, aggregate_score,
                        association_score, reconstruction_score, rerank,
                        train_ibm2)
from .datagen import (SynthRecord, export_dataset, load_dataset, sample_cus,
                      synth_self_paras)
from .decoding import (Candidate, DecodeParams, Hypothesis,
                       decode_rule_level, decode_word_level, expand,
                       oracle_recall)
from .estimator import SynchronousSemanticParser
from .grammar import (AmbiguousParseError, Derivation, Grammar, GrammarError,
                      GrammarSyntaxError, NonTerminal, NoParseError,
                      ProductionRule, SemanticSchema, Symbol, Terminal,
                      ValidationReport, derivation_to_pair,
                      enumerate_derivations, expand_rules_for, load_grammar,
                      logical_yield, parse_canonical, parse_grammar,
                      sample_derivation, utterance_yield, validate_grammar)
from .lr1 import (EOS, AutomatonConfig, Lr1Conflict, Lr1Table, RejectedToken,
                  acceptable_tokens, build_lr1, config_to_derivation, step)
from .scoring import (BigramScorer, CapabilityError, RemoteScorer,
                      RemoteScorerError, Scorer, ScoreRequest, ScoreResponse,
                      UniformScorer, make_scorer)

__version__ = "0.1.0"
