"""Command-line entry points: suite runs, scoring, reports, serving."""

from __future__ import annotations

import os
import sys

import click

from .harness import (
    MASTER_SEED_ENV,
    SuiteConfig,
    analyze_transcripts,
    count_errors,
    load_word_sets,
    render_report,
    rescore,
    run_suite,
)
from .session import SessionConfig
from .systems import find_task


def _csv_tuple(_ctx, _param, value):
    if value is None:
        return None
    return tuple(part.strip() for part in value.split(",") if part.strip())


@click.group()
def main():
    """Law-discovery benchmark harness."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON config file; flags override its fields.")
@click.option("--domains", callback=_csv_tuple, default=None,
              help="Comma-separated domain filter.")
@click.option("--tiers", callback=_csv_tuple, default=None,
              help="Comma-separated tier filter (easy,medium,hard).")
@click.option("--settings", callback=_csv_tuple, default=None,
              help="Comma-separated setting filter (vanilla,simple,complex).")
@click.option("--repeats", type=int, default=None)
@click.option("--noise", "noise_sigma", type=float, default=None)
@click.option("--seed", "master_seed", type=int, default=None)
@click.option("--output", "output_dir", type=click.Path(), default=None)
@click.option("--workers", type=int, default=None)
def run(config_path, **flags):
    """Run the builtin solver over the filtered task suite."""
    overrides = {k: v for k, v in flags.items() if v is not None}
    env_seed = os.environ.get(MASTER_SEED_ENV)
    if env_seed is not None:
        overrides["master_seed"] = int(env_seed)
    if config_path:
        config = SuiteConfig.from_file(config_path, **overrides)
    else:
        config = SuiteConfig(**overrides)
    out_dir = run_suite(config)
    errors = count_errors(out_dir)
    click.echo(f"results in {out_dir} ({errors} errored runs)")
    if errors:
        sys.exit(1)


@main.command("eval")
@click.argument("results_dir", type=click.Path(exists=True))
@click.option("--points", type=int, default=1_000,
              help="Evaluation sample size per task.")
def eval_cmd(results_dir, points):
    """Re-score recorded submissions from their expression text."""
    out = rescore(results_dir, eval_points=points)
    click.echo(f"rescored records in {out}")


@main.command()
@click.argument("results_dir", type=click.Path(exists=True))
def report(results_dir):
    """Render the setting x tier grid and per-domain tables."""
    click.echo(render_report(results_dir), nl=False)


@main.command("analyze-transcripts")
@click.argument("transcripts", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--word-sets", "word_sets_path", type=click.Path(exists=True),
              default=None, help="Alternative word-set JSON file.")
def analyze_transcripts_cmd(transcripts, word_sets_path):
    """Compute the exploration rate of each transcript file."""
    word_sets = load_word_sets(word_sets_path)
    rates = analyze_transcripts(transcripts, word_sets)
    for path, rate in rates.items():
        shown = "undefined" if rate is None else f"{rate:.1f}"
        click.echo(f"{path}\t{shown}")


@main.command()
@click.option("--task", "task_id", required=True,
              help="Task id, e.g. gravitation.c1.easy.vanilla.")
@click.option("--noise", "noise_sigma", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
@click.option("--max-rounds", type=int, default=10)
@click.option("--max-sets", type=int, default=20)
@click.option("--listen", default=None, metavar="HOST:PORT",
              help="Serve over TCP instead of stdio.")
def serve(task_id, noise_sigma, seed, max_rounds, max_sets, listen):
    """Serve one session over stdio (default) or TCP."""
    from .protocol import serve_stdio, serve_tcp

    task = find_task(task_id)
    config = SessionConfig(
        max_rounds=max_rounds,
        max_sets_per_round=max_sets,
        noise_sigma=noise_sigma,
        rng_seed=seed,
    )
    if listen:
        host, _, port = listen.rpartition(":")
        serve_tcp(task, config, host or "127.0.0.1", int(port))
    else:
        serve_stdio(task, config)


if __name__ == "__main__":
    main()
