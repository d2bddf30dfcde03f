"""Command-line entry point: fine-tune a checkpoint or serve one."""

from __future__ import annotations

import logging
import sys

import click

from paraserver.model import (ParaphraseModel, ServerConfig,
                              load_checkpoint, save_checkpoint)
from paraserver.protocol import serve_stream, serve_tcp
from paraserver.training import build_vocab, finetune, load_records


@click.command()
@click.option("--model", "model_path", type=click.Path(),
              help="Checkpoint to load (required for serving).")
@click.option("--listen", help="host:port to serve on over TCP.")
@click.option("--stdio", is_flag=True, help="Serve NDJSON on stdin/stdout.")
@click.option("--finetune", "finetune_path", type=click.Path(exists=True),
              help="Fine-tune on a SynthRecord JSONL file, then exit.")
@click.option("--output", type=click.Path(),
              help="Checkpoint path written after fine-tuning.")
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--learning-rate", type=float, default=1e-5,
              show_default=True)
@click.option("--batch-size", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def main(model_path, listen, stdio, finetune_path, output, epochs,
         learning_rate, batch_size, seed):
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        config = ServerConfig(model_path=model_path, epochs=epochs,
                              learning_rate=learning_rate,
                              max_batch_size=batch_size, listen=listen,
                              stdio=stdio, seed=seed)
        if finetune_path:
            _finetune(config, finetune_path, output)
            return
        if not model_path:
            raise click.UsageError("--model is required for serving")
        model = load_checkpoint(model_path, config)
        if stdio:
            serve_stream(model, sys.stdin, sys.stdout)
        elif listen:
            host, _, port = listen.rpartition(":")
            server = serve_tcp(model, host or "127.0.0.1", int(port))
            click.echo(f"listening on {server.server_address[0]}:"
                       f"{server.server_address[1]}", err=True)
            server.serve_forever()
        else:
            raise click.UsageError("pass --listen or --stdio to serve")
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


def _finetune(config: ServerConfig, dataset_path: str,
              output: str | None) -> None:
    if not output:
        raise click.UsageError("--output is required with --finetune")
    records = load_records(dataset_path)
    if config.model_path:
        model = load_checkpoint(config.model_path, config)
    else:
        model = ParaphraseModel(build_vocab(records), config)
    result = finetune(model, records, config)
    save_checkpoint(model, output)
    click.echo(f"wrote {output} after {len(result.epoch_losses)} epochs "
               f"(final loss {result.epoch_losses[-1]:.6f})", err=True)


if __name__ == "__main__":
    main()
