"""Scenario configuration: loading, schema validation, state construction.

One self-describing JSON file declares the robot fleet, the task tree (or a
pursuit block), behavior rules, constraints, auction and network parameters,
and the scripted membership events. Every numeric money/cost value is parsed
into an exact rational; "1/10", "0.1" and 0.1 all mean the same thing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from . import formation as fm
from . import pursuit, simnet
from .market import AdjustPolicy
from .org_core import (
    Capability,
    CapabilityKind,
    CapabilityRequirement,
    CooperativeRobot,
    TaskNode,
)
from .rules_engine import (
    PREDICATES,
    STANDARD_RULES,
    ConstraintKind,
    ConstraintRelation,
    Rule,
    RuleCategory,
)
from .wire import ALL_KINDS


class ConfigError(Exception):
    """Schema or cross-reference problem, anchored to a config path."""

    def __init__(self, where: str, problem: str):
        super().__init__(f"{where}: {problem}")
        self.where = where
        self.problem = problem


def _frac(value: Any, where: str) -> Fraction:
    try:
        if isinstance(value, bool):
            raise ValueError(value)
        if isinstance(value, int):
            return Fraction(value)
        if isinstance(value, float):
            return Fraction(str(value))
        if isinstance(value, str):
            return Fraction(value)
    except (ValueError, ZeroDivisionError):
        pass
    raise ConfigError(where, f"expected a rational number, got {value!r}")


def _require(data: dict, key: str, where: str) -> Any:
    if key not in data:
        raise ConfigError(where, f"missing required field {key!r}")
    return data[key]


def _as_list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(where, "expected a list")
    return value


def _as_dict(value: Any, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(where, "expected an object")
    return value


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: dict) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


@dataclass
class ScenarioConfig:
    """A validated scenario. build_state() yields a fresh simulation each call."""

    raw: dict
    seed: int
    max_ticks: int
    net: simnet.NetConfig
    params: fm.EngineParams
    script: list[dict] = field(default_factory=list)

    @property
    def is_pursuit(self) -> bool:
        return "pursuit" in self.raw

    def hash(self) -> str:
        return config_hash(self.raw)

    def build_robots(self) -> list[CooperativeRobot]:
        return [_build_robot(r, f"robots[{i}]") for i, r in enumerate(self.raw["robots"])]

    def build_world(self) -> pursuit.WorldState | None:
        if not self.is_pursuit:
            return None
        block = self.raw["pursuit"]
        w, h = block["grid"]
        world = pursuit.WorldState(w, h)
        robot_caps = {r.id_cr: r for r in self.build_robots()}
        for entry in block["robots"]:
            robot = robot_caps[entry["id"]]
            world.robots[entry["id"]] = pursuit.RobotPose(
                tuple(entry["pos"]),
                int(robot.capability(CapabilityKind.MOVING, "speed")),
                int(robot.capability(CapabilityKind.SENSING, "vision")),
            )
        for entry in block["evaders"]:
            world.evaders[entry["id"]] = pursuit.EvaderState(
                tuple(entry["pos"]), int(entry.get("speed", 1)), entry.get("policy", "flee")
            )
        return world

    def build_task(self) -> TaskNode | None:
        if "task" not in self.raw:
            return None
        return _build_task(self.raw["task"], "task")

    def build_state(self) -> fm.FormationState:
        state = fm.new_state(self.build_robots(), self.params, world=self.build_world())
        task = self.build_task()
        if task is not None:
            fm.register_task_tree(state, task)
        return state

    def schedule(self, scheduler: simnet.Scheduler) -> None:
        """Queue the root task arrival and the scripted membership events."""
        if "task" in self.raw:
            scheduler.push_event(fm.TaskArrived(tick=0, id_task=self.raw["task"]["id"]))
        for i, entry in enumerate(self.script):
            at = entry["at"]
            kind = entry["type"]
            if kind == "fail":
                scheduler.inject_failure(entry["robot"], at)
            elif kind == "withdraw":
                scheduler.push_event(
                    fm.RobotWithdrew(
                        tick=at,
                        robot=entry["robot"],
                        reason=fm.WithdrawReason(entry.get("reason", "Unwilling")),
                    )
                )
            elif kind == "join":
                robot = _build_robot(entry["robot"], f"events[{i}].robot")
                pose = tuple(entry["pos"]) if "pos" in entry else None
                scheduler.push_event(fm.RobotJoined(tick=at, robot=robot, pose=pose))


# --- builders ----------------------------------------------------------------


def _build_capability(data: Any, where: str) -> Capability:
    if isinstance(data, list) and len(data) == 3:
        kind, subkind, magnitude = data
    elif isinstance(data, dict):
        kind = _require(data, "kind", where)
        subkind = data.get("subkind", "")
        magnitude = data.get("magnitude", 1)
    else:
        raise ConfigError(where, "capability must be [kind, subkind, magnitude] or an object")
    try:
        ck = CapabilityKind(kind)
    except ValueError:
        raise ConfigError(where, f"unknown capability kind {kind!r}") from None
    return Capability(ck, str(subkind), _frac(magnitude, where))


def _build_requirement(data: Any, where: str) -> CapabilityRequirement:
    if isinstance(data, list) and len(data) in (2, 3):
        kind, subkind = data[0], data[1]
        minimum = data[2] if len(data) == 3 else 0
    elif isinstance(data, dict):
        kind = _require(data, "kind", where)
        subkind = data.get("subkind", "")
        minimum = data.get("min", 0)
    else:
        raise ConfigError(where, "requirement must be [kind, subkind, min] or an object")
    try:
        ck = CapabilityKind(kind)
    except ValueError:
        raise ConfigError(where, f"unknown capability kind {kind!r}") from None
    return CapabilityRequirement(ck, str(subkind), _frac(minimum, where))


def _build_robot(data: dict, where: str) -> CooperativeRobot:
    data = _as_dict(data, where)
    rid = _require(data, "id", where)
    caps = frozenset(
        _build_capability(c, f"{where}.capabilities[{i}]")
        for i, c in enumerate(_as_list(data.get("capabilities", []), f"{where}.capabilities"))
    )
    resources = tuple(
        sorted((str(k), int(v)) for k, v in _as_dict(data.get("resources", {}), f"{where}.resources").items())
    )
    interface = frozenset(data.get("interface", sorted(ALL_KINDS)))
    return CooperativeRobot(str(rid), caps, resources, interface)


def _build_task(data: dict, where: str) -> TaskNode:
    data = _as_dict(data, where)
    tid = str(_require(data, "id", where))
    reward = _frac(data.get("reward", 0), f"{where}.reward")
    requires = frozenset(
        _build_requirement(r, f"{where}.requires[{i}]")
        for i, r in enumerate(_as_list(data.get("requires", []), f"{where}.requires"))
    )
    subtasks = [
        _build_task(s, f"{where}.subtasks[{i}]")
        for i, s in enumerate(_as_list(data.get("subtasks", []), f"{where}.subtasks"))
    ]
    alternatives = [
        [_build_task(s, f"{where}.alternatives[{i}][{j}]") for j, s in enumerate(_as_list(alt, f"{where}.alternatives[{i}]"))]
        for i, alt in enumerate(_as_list(data.get("alternatives", []), f"{where}.alternatives"))
    ]
    duration = int(data.get("duration", 1))
    return TaskNode(tid, reward, requires, subtasks, alternatives, duration)


def _build_rules(data: dict) -> tuple[frozenset[Rule], dict[str, frozenset[Rule]]]:
    declared: dict[str, Rule] = {}
    for i, entry in enumerate(_as_list(data.get("rules", []), "rules")):
        where = f"rules[{i}]"
        entry = _as_dict(entry, where)
        rid = str(_require(entry, "id", where))
        category = entry.get("category", "Custom")
        predicate = str(_require(entry, "predicate", where))
        try:
            cat = RuleCategory(category)
        except ValueError:
            raise ConfigError(where, f"unknown rule category {category!r}") from None
        if predicate not in PREDICATES:
            raise ConfigError(where, f"unknown rule predicate {predicate!r}")
        rule = Rule(rid, cat, predicate)
        if rid in declared and declared[rid] != rule:
            raise ConfigError(where, f"rule id {rid!r} redeclared with a different body")
        declared[rid] = rule
    pool = frozenset(declared.values()) if declared else STANDARD_RULES
    by_id = {r.id_rule: r for r in pool}
    robot_rules: dict[str, frozenset[Rule]] = {}
    for rid, rule_ids in _as_dict(data.get("robot_rules", {}), "robot_rules").items():
        rules = []
        for rule_id in _as_list(rule_ids, f"robot_rules.{rid}"):
            if rule_id not in by_id:
                raise ConfigError(f"robot_rules.{rid}", f"unknown rule id {rule_id!r}")
            rules.append(by_id[rule_id])
        robot_rules[rid] = frozenset(rules)
    return pool, robot_rules


def from_dict(data: dict) -> ScenarioConfig:
    data = _as_dict(data, "config")
    robots = _as_list(_require(data, "robots", "config"), "robots")
    if not robots:
        raise ConfigError("robots", "at least one robot is required")
    robot_ids: set[str] = set()
    for i, r in enumerate(robots):
        built = _build_robot(r, f"robots[{i}]")
        if built.id_cr in robot_ids:
            raise ConfigError(f"robots[{i}].id", f"duplicate robot id {built.id_cr!r}")
        robot_ids.add(built.id_cr)

    task_ids: set[str] = set()
    if "task" in data:
        root = _build_task(data["task"], "task")
        stack = [root]
        while stack:
            node = stack.pop()
            if node.id_task in task_ids:
                raise ConfigError("task", f"duplicate task id {node.id_task!r}")
            task_ids.add(node.id_task)
            stack.extend(node.subtasks)
            for alt in node.alternatives:
                stack.extend(alt)

    if "task" not in data and "pursuit" not in data:
        raise ConfigError("config", "either a task tree or a pursuit block is required")

    constraints = []
    for i, entry in enumerate(_as_list(data.get("constraints", []), "constraints")):
        where = f"constraints[{i}]"
        entry = _as_dict(entry, where)
        a = str(_require(entry, "a", where))
        b = str(_require(entry, "b", where))
        kind = _require(entry, "kind", where)
        try:
            ck = ConstraintKind(kind)
        except ValueError:
            raise ConfigError(where, f"unknown constraint kind {kind!r}") from None
        if task_ids:
            for ref in (a, b):
                if ref not in task_ids:
                    raise ConfigError(where, f"constraint references unknown task {ref!r}")
        constraints.append(ConstraintRelation(a, b, ck))

    auction = _as_dict(data.get("auction", {}), "auction")
    policy = AdjustPolicy(
        delta=_frac(auction.get("delta", "1/4"), "auction.delta"),
        max_reward_rounds=int(auction.get("max_reward_rounds", 3)),
        max_total_rounds=int(auction.get("max_total_rounds", 5)),
    )

    cost_table: dict[tuple[str, str], Fraction] = {}
    for rid, tasks in _as_dict(data.get("costs", {}), "costs").items():
        if rid not in robot_ids:
            raise ConfigError(f"costs.{rid}", f"unknown robot {rid!r}")
        for tid, cost in _as_dict(tasks, f"costs.{rid}").items():
            if task_ids and tid not in task_ids:
                raise ConfigError(f"costs.{rid}.{tid}", f"unknown task {tid!r}")
            cost_table[(rid, tid)] = _frac(cost, f"costs.{rid}.{tid}")

    rules_pool, robot_rules = _build_rules(data)
    for rid in robot_rules:
        if rid not in robot_ids:
            raise ConfigError(f"robot_rules.{rid}", f"unknown robot {rid!r}")

    pursuit_params: fm.PursuitParams | None = None
    if "pursuit" in data:
        block = _as_dict(data["pursuit"], "pursuit")
        grid = _as_list(_require(block, "grid", "pursuit"), "pursuit.grid")
        if len(grid) != 2 or any(not isinstance(g, int) or g < 2 for g in grid):
            raise ConfigError("pursuit.grid", "grid must be [width, height] with sides >= 2")
        w, h = grid
        for i, entry in enumerate(_as_list(_require(block, "robots", "pursuit"), "pursuit.robots")):
            where = f"pursuit.robots[{i}]"
            entry = _as_dict(entry, where)
            rid = str(_require(entry, "id", where))
            if rid not in robot_ids:
                raise ConfigError(where, f"unknown robot {rid!r}")
            pos = _as_list(_require(entry, "pos", where), f"{where}.pos")
            if len(pos) != 2 or not (0 <= pos[0] < w and 0 <= pos[1] < h):
                raise ConfigError(f"{where}.pos", f"position {pos} out of grid bounds")
        for i, entry in enumerate(_as_list(_require(block, "evaders", "pursuit"), "pursuit.evaders")):
            where = f"pursuit.evaders[{i}]"
            entry = _as_dict(entry, where)
            pos = _as_list(_require(entry, "pos", where), f"{where}.pos")
            if len(pos) != 2 or not (0 <= pos[0] < w and 0 <= pos[1] < h):
                raise ConfigError(f"{where}.pos", f"position {pos} out of grid bounds")
        pursuit_params = fm.PursuitParams(
            k=int(block.get("k", 4)),
            base_reward=_frac(block.get("base_reward", 5), "pursuit.base_reward"),
            capture_quorum=int(block.get("capture_quorum", 2)),
            mission_reward=_frac(block.get("mission_reward", 20), "pursuit.mission_reward"),
            required_speed=
            _frac(block["required_speed"], "pursuit.required_speed")
            if "required_speed" in block
            else None,
        )

    seed = int(data.get("seed", 0))
    net_block = _as_dict(data.get("net", {}), "net")
    net = simnet.NetConfig(
        latency=int(net_block.get("latency", 1)),
        drop_rate=_frac(net_block.get("drop_rate", 0), "net.drop_rate"),
        seed=seed,
    )
    if not 0 <= net.drop_rate <= 1:
        raise ConfigError("net.drop_rate", "must be within [0, 1]")

    script: list[dict] = []
    known = set(robot_ids)
    for i, entry in enumerate(_as_list(data.get("events", []), "events")):
        where = f"events[{i}]"
        entry = _as_dict(entry, where)
        kind = _require(entry, "type", where)
        at = int(_require(entry, "at", where))
        if at < 0:
            raise ConfigError(f"{where}.at", "tick must be >= 0")
        if kind == "join":
            robot = _build_robot(_require(entry, "robot", where), f"{where}.robot")
            if robot.id_cr in known:
                raise ConfigError(f"{where}.robot", f"duplicate robot id {robot.id_cr!r}")
            known.add(robot.id_cr)
            script.append({"at": at, "type": "join", "robot": entry["robot"], "pos": entry.get("pos")})
            if "pos" not in entry and "pursuit" in data:
                raise ConfigError(where, "pursuit joins need a pos")
        elif kind in ("fail", "withdraw"):
            rid = str(_require(entry, "robot", where))
            if rid not in known:
                raise ConfigError(f"{where}.robot", f"unknown robot {rid!r}")
            item = {"at": at, "type": kind, "robot": rid}
            if kind == "withdraw":
                reason = entry.get("reason", "Unwilling")
                try:
                    fm.WithdrawReason(reason)
                except ValueError:
                    raise ConfigError(f"{where}.reason", f"unknown reason {reason!r}") from None
                item["reason"] = reason
            script.append(item)
        else:
            raise ConfigError(where, f"unknown event type {kind!r}")
    script = [dict(s, pos=s.get("pos")) if s["type"] == "join" else s for s in script]

    params = fm.EngineParams(
        margin=_frac(auction.get("margin", "1/10"), "auction.margin"),
        policy=policy,
        bid_window=int(auction.get("bid_window", 3)),
        default_cost=_frac(auction.get("default_cost", 1), "auction.default_cost"),
        cost_table=cost_table,
        constraints=tuple(constraints),
        rules_pool=rules_pool,
        robot_rules=robot_rules,
        pursuit=pursuit_params,
    )
    return ScenarioConfig(
        raw=data,
        seed=seed,
        max_ticks=int(data.get("max_ticks", 500)),
        net=net,
        params=params,
        script=sorted(script, key=lambda s: (s["at"], s["type"], str(s.get("robot")))),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{p}:{exc.lineno}:{exc.colno}", f"invalid JSON: {exc.msg}"
        ) from None
    return from_dict(data)
