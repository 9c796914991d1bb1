"""Command line entry point: run seeded simulations, replay and verify traces.

Exit codes: 0 mission success, 1 formation/mission failure (logs still
written), 2 configuration or log-format errors.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import config as cfg
from . import eventlog
from . import formation as fm
from . import metrics as metrics_mod
from . import org_core, simnet

log = logging.getLogger("hwrom")

_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("HWROM_LOG_LEVEL", "error").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.ERROR), stream=sys.stderr)


@click.group()
def main() -> None:
    """Hierarchical multi-robot organization engine and simulator."""
    _setup_logging()


def _parse_fail(spec: str) -> tuple[str, int]:
    robot, sep, tick = spec.partition("@")
    if not sep or not robot:
        raise click.BadParameter(f"--fail expects ROBOT@TICK, got {spec!r}")
    try:
        return robot, int(tick)
    except ValueError:
        raise click.BadParameter(f"--fail tick must be an integer, got {tick!r}") from None


@main.command(name="run")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--ticks", type=int, default=None, help="Override max ticks.")
@click.option("--fail", "fails", multiple=True, help="Inject a failure: ROBOT@TICK (repeatable).")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="Write the JSONL event log here.")
@click.option("--snapshot", "snapshot_path", type=click.Path(dir_okay=False), default=None,
              help="Write the final organization snapshot here.")
@click.pass_context
def run_command(ctx, config_path, seed, ticks, fails, log_path, snapshot_path) -> None:
    """Run one scenario to completion (or until the tick budget runs out)."""
    try:
        scenario = cfg.load_config(config_path)
        if seed is not None or ticks is not None:
            raw = dict(scenario.raw)
            if seed is not None:
                raw["seed"] = seed
            if ticks is not None:
                raw["max_ticks"] = ticks
            scenario = cfg.from_dict(raw)
        fail_specs = [_parse_fail(f) for f in fails]
    except cfg.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        ctx.exit(2)
        return

    state = scenario.build_state()
    writer = eventlog.TraceWriter(log_path) if log_path else None
    scheduler = simnet.Scheduler(
        state,
        scenario.net,
        record=writer.write if writer else None,
        hash_states=writer is not None,
    )
    if writer:
        writer.write(eventlog.header_record(scenario))
    try:
        scenario.schedule(scheduler)
        for robot, tick in fail_specs:
            try:
                scheduler.inject_failure(robot, tick)
            except simnet.UnknownRobotError:
                click.echo(f"config error: --fail references unknown robot {robot!r}", err=True)
                ctx.exit(2)
                return
        scheduler.run(
            until=scenario.max_ticks,
            stop_when=lambda s: s.phase in (fm.Phase.DONE, fm.Phase.FAILED),
        )
        final_hash = org_core.snapshot_hash(state.org)
        run_metrics = metrics_mod.compute_metrics(scheduler.trace, final_org_hash=final_hash)
        if writer:
            writer.write(eventlog.end_record(state, run_metrics.to_dict()))
    finally:
        if writer:
            writer.close()

    if snapshot_path:
        Path(snapshot_path).write_text(org_core.snapshot_json(state.org) + "\n")

    summary = {
        "phase": state.phase.value,
        "ticks": state.now,
        "org_hash": final_hash,
        "metrics": run_metrics.to_dict(),
    }
    click.echo(json.dumps(summary, sort_keys=True))
    ctx.exit(0 if state.phase is fm.Phase.DONE else 1)


@main.command(name="replay")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def replay_command(ctx, log_path) -> None:
    """Re-execute a logged trace and verify every state hash."""
    try:
        outcome = eventlog.replay(log_path)
    except eventlog.MalformedLogError as exc:
        click.echo(f"malformed log: {exc}", err=True)
        ctx.exit(2)
        return
    if outcome.ok:
        click.echo("replay ok")
        ctx.exit(0)
    else:
        click.echo(outcome.message, err=True)
        ctx.exit(1)


if __name__ == "__main__":
    main()
