"""Append-only JSONL event logs and trace replay verification.

A log is self-contained: the header embeds the full scenario config, every
event record carries the post-transition state hash, and the end record seals
the final hash. Replay rebuilds the simulation from the header, re-applies
the logged events through the same transition function, and checks every
hash; any tampering shows up as the first divergent sequence number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO

from . import config as cfg
from . import formation as fm
from . import simnet

LOG_VERSION = 1


class MalformedLogError(Exception):
    pass


class TraceWriter:
    """Stream trace records to a JSONL file, one record per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh: IO[str] = self.path.open("w")

    def write(self, record: dict) -> None:
        self._fh.write(cfg.canonical_json(record) + "\n")

    def close(self) -> None:
        self._fh.close()


def header_record(scenario: cfg.ScenarioConfig) -> dict:
    return {
        "type": "header",
        "version": LOG_VERSION,
        "seed": scenario.seed,
        "config_hash": scenario.hash(),
        "config": scenario.raw,
    }


def end_record(state: fm.FormationState, metrics: dict) -> dict:
    return {
        "type": "end",
        "phase": state.phase.value,
        "final_hash": fm.state_hash(state),
        "metrics": metrics,
    }


def read_log(path: str | Path) -> tuple[dict, list[dict], dict]:
    """Parse a log into (header, body records, end)."""
    lines = []
    try:
        with Path(path).open() as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    lines.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise MalformedLogError(f"line {i}: invalid JSON: {exc.msg}") from None
    except OSError as exc:
        raise MalformedLogError(f"cannot read log: {exc}") from None
    if not lines or lines[0].get("type") != "header":
        raise MalformedLogError("missing header record")
    if lines[-1].get("type") != "end":
        raise MalformedLogError("missing end record (truncated log?)")
    return lines[0], lines[1:-1], lines[-1]


@dataclass
class ReplayOutcome:
    ok: bool
    divergence_seq: int | None = None
    message: str = ""


def replay(path: str | Path) -> ReplayOutcome:
    """Re-execute a log's events and verify every recorded state hash."""
    header, records, end = read_log(path)
    try:
        scenario = cfg.from_dict(header["config"])
    except (KeyError, cfg.ConfigError) as exc:
        raise MalformedLogError(f"header config invalid: {exc}") from None
    if header.get("config_hash") != scenario.hash():
        raise MalformedLogError("header config_hash does not match embedded config")
    state = scenario.build_state()
    for rec in records:
        if rec.get("type") != "event":
            continue
        data = rec.get("data")
        expected = rec.get("state_hash")
        if data is None or expected is None:
            raise MalformedLogError(f"event record missing data/state_hash: {rec}")
        try:
            event = simnet.event_from_dict(data)
            fm.step(state, event)
        except Exception as exc:  # tampered events surface as divergence
            return ReplayOutcome(False, rec.get("seq"), f"replay error at seq {rec.get('seq')}: {exc}")
        got = fm.state_hash(state)
        if got != expected:
            return ReplayOutcome(
                False, rec.get("seq"), f"state hash diverges at seq {rec.get('seq')}"
            )
    if end.get("final_hash") != fm.state_hash(state):
        return ReplayOutcome(False, None, "final hash mismatch")
    return ReplayOutcome(True, None, "replay verified")
