"""Recursive organization model: robots, capabilities, task trees, org trees.

The whole society is one recursive node type: a node with children is a team
(or the society itself at level 0) whose first child is the leader's own
element; a node without children is an individual robot. The horizontal web
is a relation set over robots (Control edges mirror the tree vertically,
Cooperation edges connect peers at one level).

All monetary quantities are exact rationals so auction comparisons and
settlements replay bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

from .rules_engine import ConstraintRelation, RuleSet


class OrgError(Exception):
    """Base class for organization-level errors."""


class UnknownNodeError(OrgError):
    pass


class UnknownTaskError(OrgError):
    pass


class TaskNotAssignedError(OrgError):
    pass


class CapabilityKind(Enum):
    MOVING = "Moving"
    ACTION = "Action"
    SENSING = "Sensing"
    COMMUNICATION = "Communication"
    ORGANIZATION = "Organization"
    LEARNING = "Learning"


@dataclass(frozen=True)
class Capability:
    """One ability of a robot, e.g. Moving/"speed" at 2 cells per tick.

    A magnitude of 0 means the ability is absent.
    """

    kind: CapabilityKind
    subkind: str
    magnitude: Fraction

    def __post_init__(self) -> None:
        if self.magnitude < 0:
            raise ValueError("capability magnitude must be >= 0")


@dataclass(frozen=True)
class CapabilityRequirement:
    """Minimum ability demanded by a task.

    An empty subkind matches any subkind of the kind; a minimum of 0 means
    "present with positive magnitude".
    """

    kind: CapabilityKind
    subkind: str = ""
    minimum: Fraction = Fraction(0)


@dataclass(frozen=True, eq=True)
class CooperativeRobot:
    """Unified frame for individual robots, team leaders and the society leader."""

    id_cr: str
    capabilities: frozenset[Capability]
    resources: tuple[tuple[str, int], ...] = ()
    interface: frozenset[str] = frozenset()

    def capability(self, kind: CapabilityKind, subkind: str = "") -> Fraction:
        """Largest magnitude held for kind (and subkind, when given); 0 if absent."""
        best = Fraction(0)
        for cap in self.capabilities:
            if cap.kind is kind and (not subkind or cap.subkind == subkind):
                best = max(best, cap.magnitude)
        return best

    def satisfies(self, req: CapabilityRequirement) -> bool:
        mag = self.capability(req.kind, req.subkind)
        if req.minimum > 0:
            return mag >= req.minimum
        return mag > 0

    def dominates(self, requirements: Iterable[CapabilityRequirement]) -> bool:
        return all(self.satisfies(r) for r in requirements)


#: Leadership requirement: organization plus communication ability.
LEADERSHIP_REQUIREMENTS = frozenset(
    {
        CapabilityRequirement(CapabilityKind.ORGANIZATION),
        CapabilityRequirement(CapabilityKind.COMMUNICATION),
    }
)


class TaskStatus(Enum):
    UNASSIGNED = "Unassigned"
    ANNOUNCED = "Announced"
    ASSIGNED = "Assigned"
    COMPLETED = "Completed"
    FAILED = "Failed"


@dataclass
class TaskNode:
    """A goal and its declared decomposition into an ordered sub-task sequence.

    ``alternatives`` lists fallback decompositions used when an auction for
    this task cannot attract bids and the leader must re-split it.
    """

    id_task: str
    reward: Fraction = Fraction(0)
    required_capabilities: frozenset[CapabilityRequirement] = frozenset()
    subtasks: list["TaskNode"] = field(default_factory=list)
    alternatives: list[list["TaskNode"]] = field(default_factory=list)
    duration: int = 1
    status: TaskStatus = TaskStatus.UNASSIGNED

    def __post_init__(self) -> None:
        if self.reward < 0:
            raise ValueError("task reward must be >= 0")

    @property
    def is_atomic(self) -> bool:
        return not self.subtasks

    def walk(self) -> Iterator["TaskNode"]:
        yield self
        for sub in self.subtasks:
            yield from sub.walk()


class RelationKind(Enum):
    CONTROL = "Control"
    COOPERATION = "Cooperation"


@dataclass(frozen=True)
class Relation:
    a: str
    b: str
    kind: RelationKind


@dataclass
class OrgNode:
    """One element of the recursive structure.

    Children empty: an individual robot bound to ``id_robot`` (the null
    sub-structure case). Children present: a team whose children[0] is the
    element containing the leader, so ``id_robot`` always equals
    children[0].id_robot. ``id_robot`` is None only while still forming.
    """

    id_ros: str
    id_robot: str | None
    level_i: int
    pos_j: int
    children: list["OrgNode"] = field(default_factory=list)
    goals: list[str] = field(default_factory=list)
    constraints: list[ConstraintRelation] = field(default_factory=list)
    rules: RuleSet = field(default_factory=RuleSet)
    utility: Fraction = Fraction(0)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterator["OrgNode"]:
        yield self
        for child in self.children:
            yield from child.walk()


class AssignmentMode(Enum):
    WON = "won"  # won through bidding
    ALLOCATED = "allocated"  # assigned by a leader without negotiation
    LED = "led"  # leadership of a decomposed task


@dataclass(frozen=True)
class TaskAssignment:
    """Who carries a task, at what agreed price, and how it was obtained.

    ``subtask_ids`` is the effective decomposition run by the assignee when
    the task was led rather than executed directly.
    """

    id_task: str
    assignee: str
    price: Fraction
    mode: AssignmentMode
    subtask_ids: tuple[str, ...] = ()


@dataclass
class Organization:
    """A hierarchical-web structure: robots, the recursive tree, the relation web."""

    robots: list[CooperativeRobot] = field(default_factory=list)
    root: OrgNode | None = None
    relations: set[Relation] = field(default_factory=set)
    assignments: dict[str, TaskAssignment] = field(default_factory=dict)
    known_tasks: set[str] = field(default_factory=set)

    def robot_ids(self) -> set[str]:
        return {r.id_cr for r in self.robots}

    def robot(self, id_cr: str) -> CooperativeRobot:
        for r in self.robots:
            if r.id_cr == id_cr:
                return r
        raise KeyError(id_cr)


@dataclass(frozen=True)
class StructuralViolation:
    code: str
    path: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list[StructuralViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __iter__(self) -> Iterator[StructuralViolation]:
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def iter_nodes(org: Organization) -> Iterator[tuple[OrgNode, OrgNode | None, int, str]]:
    """Yield (node, parent, depth, path) over the whole tree, root first."""
    if org.root is None:
        return

    def rec(node: OrgNode, parent: OrgNode | None, depth: int, path: str) -> Iterator:
        yield node, parent, depth, path
        for i, child in enumerate(node.children):
            yield from rec(child, node, depth + 1, f"{path}/{i}")

    yield from rec(org.root, None, 0, "root")


def find_node(org: Organization, node_id: str) -> tuple[OrgNode, OrgNode | None, int, str]:
    for node, parent, depth, path in iter_nodes(org):
        if node.id_ros == node_id:
            return node, parent, depth, path
    raise UnknownNodeError(node_id)


def level_of(org: Organization, node_id: str) -> int:
    """Depth of a node below the root; the root itself is level 0."""
    _, _, depth, _ = find_node(org, node_id)
    return depth


def leader_of(org: Organization, node_id: str) -> str | None:
    """Robot bearing the node, or None while the organization is still forming."""
    node, _, _, _ = find_node(org, node_id)
    return node.id_robot


def members(org: Organization, node_id: str) -> set[str]:
    """All robot ids bound anywhere in the subtree, leaders included."""
    node, _, _, _ = find_node(org, node_id)
    return {n.id_robot for n in node.walk() if n.id_robot is not None}


def validate(org: Organization) -> ValidationReport:
    """Structural audit; every violated invariant is reported with its node path."""
    report = ValidationReport()
    add = report.violations.append

    if not org.robots or org.root is None:
        add(StructuralViolation("EmptyOrganization", "root", "an organization needs robots and a root node"))
        return report

    seen_ids: set[str] = set()
    for r in org.robots:
        if r.id_cr in seen_ids:
            add(StructuralViolation("DuplicateRobotId", "robots", r.id_cr))
        seen_ids.add(r.id_cr)
    robot_ids = seen_ids

    node_ids: set[str] = set()
    leaf_owner: dict[str, str] = {}
    levels_by_robot: dict[str, set[int]] = defaultdict(set)
    for node, parent, depth, path in iter_nodes(org):
        if node.id_ros in node_ids:
            add(StructuralViolation("DuplicateNodeId", path, node.id_ros))
        node_ids.add(node.id_ros)

        if parent is None and node.level_i != 0:
            add(StructuralViolation("RootLevelNotZero", path, f"level_i={node.level_i}"))
        if parent is not None and node.level_i != parent.level_i + 1:
            add(
                StructuralViolation(
                    "LevelSkew", path, f"level_i={node.level_i}, parent level_i={parent.level_i}"
                )
            )
        if parent is not None and node.pos_j != parent.children.index(node):
            add(StructuralViolation("PositionMismatch", path, f"pos_j={node.pos_j}"))

        if node.id_robot is None:
            add(StructuralViolation("UnboundNode", path, "id_robot is null (still forming?)"))
        else:
            if node.id_robot not in robot_ids:
                add(StructuralViolation("UnknownRobotBound", path, node.id_robot))
            levels_by_robot[node.id_robot].add(node.level_i)
            if node.is_leaf:
                if node.id_robot in leaf_owner:
                    add(
                        StructuralViolation(
                            "DuplicateMembership",
                            path,
                            f"robot {node.id_robot} already a member at {leaf_owner[node.id_robot]}",
                        )
                    )
                else:
                    leaf_owner[node.id_robot] = path

        if node.children:
            first = node.children[0]
            if node.id_robot is not None and first.id_robot != node.id_robot:
                add(
                    StructuralViolation(
                        "LeaderMismatch",
                        path,
                        f"node bound to {node.id_robot} but children[0] bound to {first.id_robot}",
                    )
                )

    control_pairs = {
        (node.id_robot, child.id_robot)
        for node, _, _, _ in iter_nodes(org)
        for child in node.children
        if node.id_robot is not None and child.id_robot is not None
    }
    for rel in sorted(org.relations, key=lambda r: (r.kind.value, r.a, r.b)):
        where = f"relation {rel.a}->{rel.b}"
        if rel.a not in robot_ids or rel.b not in robot_ids:
            add(StructuralViolation("RelationEndpointUnknown", where, rel.kind.value))
            continue
        if rel.kind is RelationKind.COOPERATION:
            if not (levels_by_robot.get(rel.a, set()) & levels_by_robot.get(rel.b, set())):
                add(
                    StructuralViolation(
                        "CrossLevelCooperation",
                        where,
                        f"levels {sorted(levels_by_robot.get(rel.a, set()))} vs {sorted(levels_by_robot.get(rel.b, set()))}",
                    )
                )
        elif rel.kind is RelationKind.CONTROL:
            if (rel.a, rel.b) not in control_pairs:
                add(StructuralViolation("ControlEdgeOffTree", where, "no matching parent-child pair"))

    return report


def _team_of(org: Organization, robot: str) -> str | None:
    """Id of the team node whose member list contains the robot's own unit,
    or None for an unaffiliated (pool) robot."""
    for node, parent, _, _ in iter_nodes(org):
        if node.is_leaf and node.id_robot == robot:
            return parent.id_ros if parent is not None else node.id_ros
    return None


def communication_allowed(org: Organization, a: str, b: str) -> bool:
    """Topology rule: within a team anyone talks; across teams only the
    leaders do. Unaffiliated robots and the environment are reachable by
    anyone (pre-formation broadcast)."""
    from .wire import ENV

    if a == ENV or b == ENV or a == b:
        return True
    team_a = _team_of(org, a)
    team_b = _team_of(org, b)
    if team_a is None or team_b is None:
        return True
    if team_a == team_b:
        return True
    leaders = {n.id_robot for n, _, _, _ in iter_nodes(org) if n.children and n.id_robot}
    return a in leaders and b in leaders


def settle_utilities(org: Organization, completed: Mapping[str, Fraction]) -> dict[str, Fraction]:
    """Settle payouts for completed tasks and return each robot's income delta.

    ``completed`` maps a completed task to the payout its assignee receives:
    the external payout for a root task, the agreed price for an inner one.
    A direct executor pockets the payout; a leader who decomposed the task
    pockets the payout minus the winning bids of its sub-auction (possibly a
    negative margin). Node utility accumulators are updated in place.
    """
    deltas: dict[str, Fraction] = {}
    goal_node: dict[str, OrgNode] = {}
    for node, _, _, _ in iter_nodes(org):
        for g in node.goals:
            goal_node.setdefault(g, node)

    for id_task in sorted(completed):
        payout = completed[id_task]
        if id_task not in org.known_tasks:
            raise UnknownTaskError(id_task)
        assignment = org.assignments.get(id_task)
        if assignment is None:
            raise TaskNotAssignedError(id_task)
        if assignment.subtask_ids:
            paid_out = Fraction(0)
            for sub in assignment.subtask_ids:
                sub_assignment = org.assignments.get(sub)
                if sub_assignment is not None:
                    paid_out += sub_assignment.price
            delta = payout - paid_out
        else:
            delta = payout
        deltas[assignment.assignee] = deltas.get(assignment.assignee, Fraction(0)) + delta
        node = goal_node.get(id_task)
        if node is not None:
            node.utility += delta

    return deltas


# --- canonical snapshot -----------------------------------------------------


def _frac(x: Fraction) -> str:
    return str(x)


def _node_dict(node: OrgNode) -> dict:
    return {
        "id_ros": node.id_ros,
        "id_robot": node.id_robot,
        "level_i": node.level_i,
        "pos_j": node.pos_j,
        "goals": list(node.goals),
        "constraints": [
            {"a": c.a, "b": c.b, "kind": c.kind.value} for c in node.constraints
        ],
        "rules": sorted(r.id_rule for r in node.rules.rules),
        "utility": _frac(node.utility),
        "children": [_node_dict(c) for c in node.children],
    }


def snapshot_dict(org: Organization) -> dict:
    """Plain-data snapshot with deterministic ordering everywhere."""
    return {
        "robots": [
            {
                "id_cr": r.id_cr,
                "capabilities": sorted(
                    [c.kind.value, c.subkind, _frac(c.magnitude)] for c in r.capabilities
                ),
                "resources": sorted(list(pair) for pair in r.resources),
                "interface": sorted(r.interface),
            }
            for r in sorted(org.robots, key=lambda r: r.id_cr)
        ],
        "root": _node_dict(org.root) if org.root is not None else None,
        "relations": sorted(
            [r.a, r.b, r.kind.value] for r in org.relations
        ),
        "assignments": {
            t: {
                "assignee": a.assignee,
                "price": _frac(a.price),
                "mode": a.mode.value,
                "subtasks": list(a.subtask_ids),
            }
            for t, a in sorted(org.assignments.items())
        },
        "known_tasks": sorted(org.known_tasks),
    }


def snapshot_json(org: Organization) -> str:
    return json.dumps(snapshot_dict(org), sort_keys=True, separators=(",", ":"))


def snapshot_hash(org: Organization) -> str:
    return hashlib.sha256(snapshot_json(org).encode()).hexdigest()
