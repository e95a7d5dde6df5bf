"""Command-line entry points for the data engine.

`engine run` executes full rounds from a YAML config; the stage subcommands
(ingest / sample / generate / validate) stop the round pipeline after the named
stage, which makes them safe to re-run: completed stages are skipped via their
markers. IPO subcommands persist session state under run_dir/ipo/ so a review
can span several invocations.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import yaml

from . import prompts as prompts_mod
from .dataset import build_from_rows, diversity, merge_rounds, parse_dataset, write_dataset
from .engine import EngineConfig, EngineState, run_round
from .errors import EngineError
from .ipo import IPOState
from .records import compute_scoreboard, ingest_results


def _load_config(path) -> EngineConfig:
    return EngineConfig.from_file(path)


def _save_config_copy(config: EngineConfig) -> None:
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    obj = dataclasses.asdict(config)
    (run_dir / "config.yaml").write_text(yaml.safe_dump(obj), encoding="utf-8")


def _resume_config(run_dir) -> EngineConfig:
    path = Path(run_dir) / "config.yaml"
    if not path.exists():
        raise click.UsageError(f"no config.yaml in {run_dir}; was this directory made by `engine run`?")
    config = EngineConfig.from_file(path)
    config.run_dir = str(run_dir)
    return config


def _next_round(state: EngineState) -> int:
    n = 1
    while (state.run_dir / f"round_{n}" / "manifest.json").exists():
        n += 1
    return n


def _print_manifest(manifest) -> None:
    click.echo(
        f"round {manifest.round}: seeds={manifest.seeds_built} "
        f"generated={manifest.generated} accepted={manifest.accepted} "
        f"cost=${manifest.cost:.4f}"
    )


@click.group()
def main():
    """Closed-loop instruction-tuning data engine."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run(config_path):
    """Run every configured round of the closed loop."""
    config = _load_config(config_path)
    _save_config_copy(config)
    state = EngineState(config)
    for round in range(1, config.rounds + 1):
        manifest = run_round(state, round)
        _print_manifest(manifest)


@main.command()
@click.option("--resume", "run_dir", required=True, type=click.Path(exists=True))
@click.option("--round", "round_n", type=int, default=None,
              help="Round to (re)run; defaults to the first unfinished round.")
def round(run_dir, round_n):
    """Resume a run directory: finish the first incomplete round."""
    config = _resume_config(run_dir)
    state = EngineState(config)
    n = round_n or _next_round(state)
    manifest = run_round(state, n)
    _print_manifest(manifest)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="generic",
              type=click.Choice(["generic", "mmbench-like", "aokvqa-like"]))
@click.option("--output", "output_path", type=click.Path(), default=None,
              help="Write the scoreboard JSON here instead of stdout.")
def ingest(input_path, fmt, output_path):
    """Ingest evaluation results and print the per-dimension scoreboard."""
    with open(input_path, encoding="utf-8") as fh:
        records = ingest_results(fh, format=fmt)
    board = compute_scoreboard(records)
    text = json.dumps(board.to_json(), indent=2, sort_keys=True)
    if output_path:
        Path(output_path).write_text(text + "\n", encoding="utf-8")
        click.echo(f"{len(records)} records -> {output_path}")
    else:
        click.echo(text)


def _stage_command(name, stage, help_text):
    @main.command(name=name, help=help_text)
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True))
    @click.option("--round", "round_n", type=int, default=1)
    def _cmd(config_path, round_n):
        config = _load_config(config_path)
        _save_config_copy(config)
        state = EngineState(config)
        run_round(state, round_n, until=stage)
        click.echo(f"round {round_n}: done through stage {stage!r} "
                   f"(artifacts in {state.run_dir / f'round_{round_n}'})")
    return _cmd


_stage_command("sample", "seeds", "Build ABS query seeds for one round, then stop.")
_stage_command("generate", "generate", "Run the round through LLM generation, then stop.")
_stage_command("validate", "validate", "Run the round through validation, then stop.")


@main.group()
def dataset():
    """Dataset assembly, merging, and metrics."""


@dataset.command("build")
@click.option("--accepted", "accepted_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="QMAE", type=click.Choice(["QMAE", "QMA"]))
@click.option("--output", "output_path", required=True, type=click.Path())
def dataset_build(accepted_path, fmt, output_path):
    """Build a dataset file from accepted.jsonl rows."""
    rows = [
        json.loads(line)
        for line in Path(accepted_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    items, manifest = build_from_rows(rows, fmt)
    write_dataset(items, output_path)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


@dataset.command("merge")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
def dataset_merge(inputs, output_path):
    """Merge round datasets, deduplicating (image, question) pairs."""
    merged = merge_rounds(inputs)
    write_dataset(merged, output_path)
    click.echo(f"{len(merged)} items -> {output_path}")


@dataset.command("metrics")
@click.argument("input_path", type=click.Path(exists=True))
def dataset_metrics(input_path):
    """Print diversity metrics for a dataset file."""
    items = parse_dataset(input_path)
    report = diversity(items)
    click.echo(json.dumps(report.to_json(), indent=2, sort_keys=True))


# -- IPO ----------------------------------------------------------------------


def _ipo_context(config_path):
    from .service import ServiceContext

    config = _load_config(config_path)
    ctx = ServiceContext(config)
    ipo_dir = ctx.state.run_dir / "ipo"
    if ipo_dir.exists():
        ctx.ipo.load_state(ipo_dir)
    return ctx, ipo_dir


def _get_session(ctx, session_id):
    session = ctx.ipo.sessions.get(session_id)
    if session is None:
        raise click.UsageError(f"unknown session {session_id!r}")
    return session


@main.group()
def ipo():
    """Interactive prompt optimization sessions."""


@ipo.command("start")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--template", "template_id", default=prompts_mod.GENERATION_TEMPLATE_ID)
@click.option("--version", type=int, default=None, help="Defaults to the active version.")
@click.option("--batch-size", type=int, default=20)
@click.option("--threshold", type=float, default=0.10)
@click.option("--session-id", default=None)
def ipo_start(config_path, template_id, version, batch_size, threshold, session_id):
    """Open a session and run the conflict check."""
    ctx, ipo_dir = _ipo_context(config_path)
    if version is None:
        version = ctx.state.prompt_store.active(template_id).version
    session = ctx.ipo.start_session(
        template_id, version, batch_size=batch_size,
        threshold=threshold, session_id=session_id,
    )
    proposal = ctx.ipo.run_conflict_check(session, ctx.state.gateway,
                                          model=ctx.config.model)
    ctx.ipo.save_state(ipo_dir)
    click.echo(f"session {session.session_id} on {template_id} v{version}: "
               f"state={session.state.value}")
    click.echo(f"conflict-check proposal {proposal.proposal_id}: {proposal.status}")


@ipo.command("batch")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--session", "session_id", required=True)
def ipo_batch(config_path, session_id):
    """Generate (or resume) the review batch for a session."""
    ctx, ipo_dir = _ipo_context(config_path)
    session = _get_session(ctx, session_id)
    batch = ctx.generate_ipo_batch(session)
    ctx.ipo.save_state(ipo_dir)
    for item in batch:
        click.echo(json.dumps(item.to_json(), sort_keys=True))
    click.echo(f"# {len(batch)} items, "
               f"{sum(1 for i in batch if i.status == 'needs_human')} awaiting review",
               err=True)


@ipo.command("rate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--session", "session_id", required=True)
def ipo_rate(config_path, session_id):
    """Print the failure rate of a fully reviewed batch."""
    ctx, _ = _ipo_context(config_path)
    session = _get_session(ctx, session_id)
    click.echo(f"{ctx.ipo.failure_rate(session):.4f}")


@ipo.command("step")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--session", "session_id", required=True)
def ipo_step(config_path, session_id):
    """Run the convergence test; on failure, request a correction proposal."""
    ctx, ipo_dir = _ipo_context(config_path)
    session = _get_session(ctx, session_id)
    new_state = ctx.ipo.step(session)
    click.echo(f"failure_rate={session.history[-1]['failure_rate']:.4f} "
               f"state={new_state.value}")
    if new_state is IPOState.CORRECTION:
        proposal = ctx.ipo.propose_correction(session, ctx.state.gateway,
                                              model=ctx.config.model)
        click.echo(f"correction proposal {proposal.proposal_id}: {proposal.status}")
    ctx.ipo.save_state(ipo_dir)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--addr", default="127.0.0.1:8080")
def serve(config_path, addr):
    """Serve the console HTTP API."""
    from .service import serve as serve_app

    serve_app(_load_config(config_path), addr)


def entry():
    try:
        main(standalone_mode=True)
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entry()
