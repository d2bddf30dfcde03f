"""Command-line harness: validate / decode / eval / sample / train-align /
dump-automaton.

Inputs for decode and eval are JSONL lines of the form
``{"id": .., "utterance": [...], "gold_lf": [...]?}``.  Every error path
exits nonzero after printing a single ``error: ...`` line to stderr.
Flags win over values from an optional TOML config file.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import click

from . import lr1
from .alignment import (AlignmentModel, load_pairs, rerank as rerank_candidates,
                        train_ibm2)
from .datagen import export_dataset, sample_cus
from .decoding import DecodeParams, decode_rule_level, decode_word_level, \
    oracle_recall
from .grammar import (GrammarError, GrammarSyntaxError, SemanticSchema,
                      load_grammar, validate_grammar)
from .scoring import RemoteScorerError, make_scorer

EXIT_INVALID = 1
EXIT_USAGE = 2


class CliError(click.ClickException):
    exit_code = EXIT_INVALID

    def show(self, file=None):
        print(f"error: {self.message}", file=sys.stderr)


class CliUsageError(CliError):
    exit_code = EXIT_USAGE


def _load_grammar(path, schema):
    try:
        g = load_grammar(path, schema_path=schema)
    except GrammarSyntaxError as exc:
        raise CliUsageError(f"syntax: {exc}")
    except (OSError, GrammarError, json.JSONDecodeError) as exc:
        raise CliUsageError(str(exc))
    return g


def _validated_grammar(path, schema):
    g = _load_grammar(path, schema)
    report = validate_grammar(g)
    if not report.ok:
        raise CliError("invalid grammar: " + "; ".join(report.entries))
    return g


def _read_jsonl(path):
    fh = sys.stdin if path == "-" else open(path, encoding="utf-8")
    try:
        return [json.loads(line) for line in fh if line.strip()]
    finally:
        if fh is not sys.stdin:
            fh.close()


def _apply_config(ctx, config_path):
    """Fill parameters from a TOML file; explicit flags keep priority."""
    if not config_path:
        return
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(config_path, "rb") as fh:
        table = tomllib.load(fh)
    section = table.get(ctx.command.name, table)
    for key, value in section.items():
        name = key.replace("-", "_")
        if name not in ctx.params:
            raise CliUsageError(f"unknown config key: {key}")
        src = ctx.get_parameter_source(name)
        if src is not None and src.name == "DEFAULT":
            ctx.params[name] = value


@click.group()
def main():
    """Grammar-constrained paraphrase decoding toolkit."""


@main.command()
@click.option("--grammar", required=True, type=click.Path())
@click.option("--schema", type=click.Path(), default=None)
def validate(grammar, schema):
    """Check a grammar file; exit 0 only when the report is empty."""
    g = _load_grammar(grammar, schema)
    report = validate_grammar(g)
    if report.ok:
        click.echo(f"ok: {len(g.rules)} rules, start ${g.start}")
        return
    for entry in report.entries:
        click.echo(entry)
    sys.exit(EXIT_INVALID)


@dataclass
class _DecodeJob:
    grammar: object
    table: object
    scorer: object
    params: DecodeParams
    mode: str
    do_rerank: bool
    align_model: object
    trace_events: list = field(default_factory=list)


def _decode_one(job: _DecodeJob, item):
    x = tuple(item["utterance"])
    trace_cb = job.trace_events.append if job.trace_events is not None \
        else None
    if job.mode == "word":
        cands = decode_word_level(x, job.grammar, job.table, job.scorer,
                                  job.params, trace=trace_cb)
    else:
        cands = decode_rule_level(x, job.grammar, job.scorer, job.params,
                                  trace=trace_cb)
    out = {"id": item.get("id"), "candidates": []}
    if job.do_rerank and cands:
        for r in rerank_candidates(x, cands, job.scorer, job.align_model):
            out["candidates"].append({
                "utterance": list(r.candidate.utterance),
                "lf": list(r.candidate.logical_form),
                "logp": r.gen, "rec": r.rec, "asso": r.asso,
                "total": r.total})
    else:
        for c in cands:
            out["candidates"].append({"utterance": list(c.utterance),
                                      "lf": list(c.logical_form),
                                      "logp": c.logp})
    return out


@main.command()
@click.option("--grammar", required=True, type=click.Path())
@click.option("--schema", type=click.Path(), default=None)
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", "output_path", default="-", type=click.Path())
@click.option("--scorer", "scorer_spec", default="uniform",
              help="uniform | bigram:<path>[?smoothing=none&eos=false"
                   "&boost=1.0] | remote:<host>:<port>")
@click.option("--mode", type=click.Choice(["rule", "word"]), default="rule")
@click.option("--beam", default=20, show_default=True)
@click.option("--max-len", default=64, show_default=True)
@click.option("--max-depth", default=5, show_default=True)
@click.option("--n-best", default=20, show_default=True)
@click.option("--renormalize", is_flag=True, default=False)
@click.option("--rerank", "do_rerank", is_flag=True, default=False)
@click.option("--align-model", type=click.Path(), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("--trace", "trace_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.pass_context
def decode(ctx, grammar, schema, input_path, output_path, scorer_spec, mode,
           beam, max_len, max_depth, n_best, renormalize, do_rerank,
           align_model, seed, jobs, trace_path, config_path):
    """Decode utterances to (canonical utterance, logical form) N-best
    lists, one JSON line per input."""
    _apply_config(ctx, config_path)
    p = ctx.params
    g = _validated_grammar(p["grammar"], p["schema"])
    try:
        scorer = make_scorer(p["scorer_spec"], g)
    except (ValueError, OSError, RemoteScorerError) as exc:
        raise CliUsageError(str(exc))
    table = None
    if p["mode"] == "word":
        try:
            table = lr1.build_lr1(g)
        except lr1.Lr1Conflict as exc:
            raise CliError(f"word-level decoding unavailable: {exc}")
    model = None
    if p["do_rerank"]:
        if not p["align_model"]:
            raise CliUsageError("--rerank requires --align-model")
        model = AlignmentModel.load(p["align_model"])
    try:
        params = DecodeParams(beam_size=p["beam"], max_len=p["max_len"],
                              max_depth=p["max_depth"], n_best=p["n_best"],
                              renormalize=p["renormalize"])
    except ValueError as exc:
        raise CliUsageError(str(exc))

    items = _read_jsonl(p["input_path"])
    job = _DecodeJob(g, table, scorer, params, p["mode"], p["do_rerank"],
                     model,
                     trace_events=[] if p["trace_path"] else None)
    try:
        if p["jobs"] > 1 and not p["trace_path"]:
            with ThreadPoolExecutor(max_workers=p["jobs"]) as pool:
                results = list(pool.map(lambda it: _decode_one(job, it),
                                        items))
        else:
            results = [_decode_one(job, it) for it in items]
    except RemoteScorerError as exc:
        raise CliError(f"scorer: {exc}")
    lines = "".join(json.dumps(r) + "\n" for r in results)
    if p["output_path"] == "-":
        sys.stdout.write(lines)
    else:
        with open(p["output_path"], "w", encoding="utf-8") as fh:
            fh.write(lines)
    if p["trace_path"]:
        with open(p["trace_path"], "w", encoding="utf-8") as fh:
            for event in job.trace_events:
                fh.write(json.dumps(event) + "\n")


@main.command("eval")
@click.option("--predictions", required=True, type=click.Path())
@click.option("--gold", required=True, type=click.Path())
@click.option("--output", "output_path", default="-", type=click.Path())
def eval_cmd(predictions, gold, output_path):
    """Exact-match accuracy and oracle R@N of decode output against gold."""
    preds = {item["id"]: item for item in _read_jsonl(predictions)}
    golds = {item["id"]: item for item in _read_jsonl(gold)}
    if set(preds) != set(golds):
        missing = sorted(set(golds) ^ set(preds))
        raise CliError(f"id mismatch between predictions and gold: {missing}")
    per_item = []
    exact = 0
    oracle = 0
    for gid in sorted(golds, key=str):
        gold_lf = list(golds[gid]["gold_lf"])
        cands = preds[gid]["candidates"]
        top = cands[0]["lf"] if cands else None
        correct = top == gold_lf
        hit = any(c["lf"] == gold_lf for c in cands)
        exact += correct
        oracle += hit
        per_item.append({"id": gid, "predicted_lf": top, "gold_lf": gold_lf,
                         "correct": correct, "oracle_hit": hit})
    n = len(per_item)
    report = {"n": n, "exact_match": exact / n if n else 0.0,
              "oracle_at_n": oracle / n if n else 0.0,
              "per_item": per_item}
    text = json.dumps(report, indent=2) + "\n"
    if output_path == "-":
        sys.stdout.write(text)
    else:
        with open(output_path, "w", encoding="utf-8") as fh:
            fh.write(text)


@main.command()
@click.option("--grammar", required=True, type=click.Path())
@click.option("--schema", type=click.Path(), default=None)
@click.option("-n", "count", default=10, show_default=True)
@click.option("--max-depth", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--output", "output_path", required=True, type=click.Path())
def sample(grammar, schema, count, max_depth, seed, output_path):
    """Sample distinct canonical utterances into a SynthRecord JSONL file."""
    g = _validated_grammar(grammar, schema)
    records = sample_cus(g, count, max_depth, seed)
    written = export_dataset(records, output_path)
    click.echo(f"wrote {written} records to {output_path}")


@main.command("train-align")
@click.option("--pairs", required=True, type=click.Path())
@click.option("--epochs", default=5, show_default=True)
@click.option("--output", "output_path", required=True, type=click.Path())
def train_align(pairs, epochs, output_path):
    """Train the IBM Model 2 alignment tables from a JSONL pair file."""
    try:
        pair_list = load_pairs(pairs)
        model = train_ibm2(pair_list, epochs)
    except (OSError, ValueError, KeyError) as exc:
        raise CliUsageError(str(exc))
    model.save(output_path)
    click.echo(f"trained on {len(pair_list)} pairs over {epochs} epochs; "
               f"final log-likelihood fwd={model.fwd.loglik[-1]:.4f} "
               f"rev={model.rev.loglik[-1]:.4f}")


@main.command("dump-automaton")
@click.option("--grammar", required=True, type=click.Path())
@click.option("--schema", type=click.Path(), default=None)
@click.option("--output", "output_path", default="-", type=click.Path())
def dump_automaton(grammar, schema, output_path):
    """Build the LR(1) table and dump it as JSON (debugging aid)."""
    g = _validated_grammar(grammar, schema)
    try:
        table = lr1.build_lr1(g)
    except lr1.Lr1Conflict as exc:
        raise CliError(str(exc))
    text = table.dump() + "\n"
    if output_path == "-":
        sys.stdout.write(text)
    else:
        with open(output_path, "w", encoding="utf-8") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
