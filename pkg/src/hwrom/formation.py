"""Top-down formation state machine.

All state mutation happens in step(); the scheduler (simnet) only turns the
outbound messages and timers into future events. step() is deterministic:
identical (state, event) sequences produce identical states and hashes, which
is what makes logs replayable and verifiable.

The normal path is market-based: announce, collect bids, award by least
reward, escalate or re-split on silence. When the tactics ladder is
exhausted the acting society leader falls back on its allocation right and
re-plans assignments directly (without negotiation), which keeps formation
complete whenever a feasible assignment exists at all.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterator

from . import org_core, pursuit, rules_engine, wire
from .market import (
    AdjustPolicy,
    Announcement,
    Bid,
    Decline,
    GiveUp,
    Redecompose,
    ScenarioContext,
    adjust_tactics,
    compute_bid,
    select_winner,
)
from .org_core import (
    LEADERSHIP_REQUIREMENTS,
    AssignmentMode,
    CapabilityKind,
    CapabilityRequirement,
    CooperativeRobot,
    Organization,
    OrgNode,
    Relation,
    RelationKind,
    TaskAssignment,
    TaskNode,
    TaskStatus,
)
from .rules_engine import (
    STANDARD_RULES,
    AuctionHistory,
    ConstraintKind,
    ConstraintRelation,
    Rule,
    RuleScope,
    RuleSet,
    check_assignment,
    winner_locked,
)
from .wire import ENV


class FormationError(Exception):
    """Raised when an organization cannot be formed (unfillable task)."""

    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind
        self.detail = detail


class DuplicateRobotIdError(FormationError):
    def __init__(self, robot: str):
        super().__init__("DuplicateRobotId", robot)


class ProtocolViolationError(Exception):
    """An event that cannot happen in any legal schedule."""


class Phase(Enum):
    IDLE = "Idle"  # pursuit scouting, before any task exists
    FORMING = "Forming"
    EXECUTING = "Executing"
    DONE = "Done"
    FAILED = "Failed"


class WithdrawReason(Enum):
    UNWILLING = "Unwilling"
    ENVIRONMENT_CHANGED = "EnvironmentChanged"
    FAILURE = "Failure"


# --- events ------------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class FormationEvent:
    tick: int
    seq: int = -1


@dataclass(frozen=True, kw_only=True)
class TaskArrived(FormationEvent):
    id_task: str
    parent_node: str | None = None
    designated_leader: str | None = None


@dataclass(frozen=True, kw_only=True)
class BidSubmitted(FormationEvent):
    bid: Bid


@dataclass(frozen=True, kw_only=True)
class AuctionClosed(FormationEvent):
    id_task: str
    round: int = 0


@dataclass(frozen=True, kw_only=True)
class TaskCompleted(FormationEvent):
    id_task: str
    robot: str


@dataclass(frozen=True, kw_only=True)
class RobotWithdrew(FormationEvent):
    robot: str
    reason: WithdrawReason = WithdrawReason.UNWILLING


@dataclass(frozen=True, kw_only=True)
class RobotFailed(FormationEvent):
    robot: str


@dataclass(frozen=True, kw_only=True)
class RobotJoined(FormationEvent):
    robot: CooperativeRobot
    pose: tuple[int, int] | None = None


@dataclass(frozen=True, kw_only=True)
class Tick(FormationEvent):
    pass


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class PursuitParams:
    k: int = 4
    base_reward: Fraction = Fraction(5)
    capture_quorum: int = 2
    mission_reward: Fraction = Fraction(20)
    required_speed: Fraction | None = None


@dataclass(frozen=True)
class EngineParams:
    """Engine knobs: auction economics, norms, constraints, scenario costs."""

    margin: Fraction = Fraction(1, 10)
    policy: AdjustPolicy = AdjustPolicy()
    bid_window: int = 3
    default_cost: Fraction = Fraction(1)
    cost_table: dict[tuple[str, str], Fraction] = field(default_factory=dict)
    constraints: tuple[ConstraintRelation, ...] = ()
    rules_pool: frozenset[Rule] = STANDARD_RULES
    robot_rules: dict[str, frozenset[Rule]] = field(default_factory=dict)
    pursuit: PursuitParams | None = None


@dataclass
class AuctionState:
    announcement: Announcement
    parent_node: str | None
    bids: list[Bid] = field(default_factory=list)


@dataclass(frozen=True)
class PendingTask:
    id_task: str
    parent_node: str | None


@dataclass
class StepResult:
    messages: list[wire.Message] = field(default_factory=list)
    timers: list[FormationEvent] = field(default_factory=list)
    notes: list[dict] = field(default_factory=list)


@dataclass
class FormationState:
    params: EngineParams
    robots: dict[str, CooperativeRobot] = field(default_factory=dict)
    pool: set[str] = field(default_factory=set)
    dead: set[str] = field(default_factory=set)
    departed: set[str] = field(default_factory=set)
    level: int = 0
    pending: deque[PendingTask] = field(default_factory=deque)
    active_auctions: dict[str, AuctionState] = field(default_factory=dict)
    org: Organization = field(default_factory=Organization)
    history: AuctionHistory = field(default_factory=AuctionHistory)
    tasks: dict[str, TaskNode] = field(default_factory=dict)
    root_tasks: list[str] = field(default_factory=list)
    task_parent: dict[str, str | None] = field(default_factory=dict)
    task_children: dict[str, list[str]] = field(default_factory=dict)
    current_reward: dict[str, Fraction] = field(default_factory=dict)
    alternatives_used: dict[str, int] = field(default_factory=dict)
    phase: Phase = Phase.FORMING
    now: int = 0
    busy_until: dict[str, int] = field(default_factory=dict)
    exec_started: set[str] = field(default_factory=set)
    # pursuit bookkeeping
    world: pursuit.WorldState | None = None
    first_detection: dict[tuple[str, str], int] = field(default_factory=dict)
    organizer: str | None = None
    planned_evaders: set[str] = field(default_factory=set)
    flank_target: dict[str, tuple[str, tuple[int, int]]] = field(default_factory=dict)
    flank_cell: dict[str, tuple[int, int]] = field(default_factory=dict)

    def alive(self, robot: str) -> bool:
        return robot in self.robots and robot not in self.dead and robot not in self.departed

    def robot_tasks(self, robot: str) -> set[str]:
        """Every task ever assigned to the robot (Parallel legality footprint)."""
        return {t for t, a in self.org.assignments.items() if a.assignee == robot}

    def leaf_of(self, robot: str) -> OrgNode | None:
        for node, _, _, _ in org_core.iter_nodes(self.org):
            if node.is_leaf and node.id_robot == robot:
                return node
        return None

    def node(self, node_id: str) -> OrgNode | None:
        for node, _, _, _ in org_core.iter_nodes(self.org):
            if node.id_ros == node_id:
                return node
        return None

    def parent_of(self, node_id: str) -> OrgNode | None:
        for node, parent, _, _ in org_core.iter_nodes(self.org):
            if node.id_ros == node_id:
                return parent
        return None

    def leads(self, robot: str) -> list[OrgNode]:
        return [
            n for n, _, _, _ in org_core.iter_nodes(self.org) if n.children and n.id_robot == robot
        ]

    def effective_tasks(self) -> Iterator[str]:
        stack = list(self.root_tasks)
        while stack:
            t = stack.pop(0)
            yield t
            stack = self.task_children.get(t, []) + stack

    def is_composite(self, id_task: str) -> bool:
        return bool(self.task_children.get(id_task))


# --- state construction ---------------------------------------------------------


def _leadership_capable(robot: CooperativeRobot) -> bool:
    return robot.dominates(LEADERSHIP_REQUIREMENTS)


def register_task_tree(state: FormationState, task: TaskNode, *, as_root: bool = True) -> None:
    for node in task.walk():
        if node.id_task in state.tasks:
            raise FormationError("DuplicateTaskId", node.id_task)
        state.tasks[node.id_task] = node
        state.task_children[node.id_task] = [s.id_task for s in node.subtasks]
        state.current_reward[node.id_task] = node.reward
        for sub in node.subtasks:
            state.task_parent[sub.id_task] = node.id_task
        state.org.known_tasks.add(node.id_task)
    if as_root:
        state.task_parent.setdefault(task.id_task, None)
        state.root_tasks.append(task.id_task)


def new_state(
    robots: list[CooperativeRobot],
    params: EngineParams,
    *,
    world: pursuit.WorldState | None = None,
) -> FormationState:
    state = FormationState(params=params, world=world)
    state.phase = Phase.IDLE if world is not None else Phase.FORMING
    for r in robots:
        if r.id_cr in state.robots:
            raise DuplicateRobotIdError(r.id_cr)
        state.robots[r.id_cr] = r
        state.pool.add(r.id_cr)
    return state


# --- cost model ------------------------------------------------------------------


def _task_depth(state: FormationState, t: str) -> int:
    d = 0
    while (p := state.task_parent.get(t)) is not None:
        t = p
        d += 1
    return d


def _chain_with(state: FormationState, robot: str, extra: str) -> bool:
    """Leadership legality: a robot's composite tasks must form one contiguous
    parent-child chain, otherwise its own element would have to sit under two
    unrelated teams at once."""
    mine = {
        x
        for x, a in state.org.assignments.items()
        if a.assignee == robot
        and state.is_composite(x)
        and state.tasks[x].status in (TaskStatus.ASSIGNED, TaskStatus.COMPLETED)
    }
    mine.add(extra)
    if len(mine) <= 1:
        return True
    xs = sorted(mine, key=lambda x: (_task_depth(state, x), x))
    return all(state.task_parent.get(xs[i + 1]) == xs[i] for i in range(len(xs) - 1))


def _cost_of(state: FormationState, robot: CooperativeRobot, ann: Announcement) -> Fraction:
    if state.world is not None:
        if ann.id_task in state.flank_cell:
            if robot.id_cr not in state.world.robots:
                raise pursuit.ZeroSpeedError(robot.id_cr)
            return pursuit.robot_cost(state.world, robot.id_cr, state.flank_cell[ann.id_task])
        if ann.leadership:
            return Fraction(0)
    return state.params.cost_table.get((robot.id_cr, ann.id_task), state.params.default_cost)


def _context(state: FormationState) -> ScenarioContext:
    return ScenarioContext(
        cost_of=lambda robot, ann: _cost_of(state, robot, ann),
        margin=state.params.margin,
        is_locked=None,
        now=state.now,
    )


def consider_announcement(state: FormationState, robot_id: str, ann: Announcement) -> Bid | Decline:
    """The robot-side decision on an announcement: self-check the norms, then
    price the task. Invoked by the scheduler at delivery time."""
    robot = state.robots[robot_id]
    if winner_locked(state.history, robot_id, state.now):
        return Decline(robot_id, ann.id_task, "winner_locked")
    if ann.leadership and ann.auctioneer != ENV:
        # a sitting leader may only extend its own chain downward
        if not _chain_with(state, robot_id, ann.id_task):
            return Decline(robot_id, ann.id_task, "leadership_chain")
    held = state.robot_tasks(robot_id) | {ann.id_task}
    check = check_assignment(
        RuleSet(state.params.rules_pool), state.params.constraints, {robot_id: held}
    )
    if not check.ok:
        return Decline(robot_id, ann.id_task, "parallel_conflict")
    return compute_bid(robot, ann, _context(state))


# --- structural edits --------------------------------------------------------------


def _rules_for(state: FormationState, robot: str) -> RuleSet:
    return RuleSet(state.params.robot_rules.get(robot, state.params.rules_pool), RuleScope.LOCAL)


def _new_leaf(state: FormationState, robot: str) -> OrgNode:
    return OrgNode(
        id_ros=f"unit:{robot}",
        id_robot=robot,
        level_i=0,
        pos_j=0,
        rules=_rules_for(state, robot),
    )


def _renumber(state: FormationState) -> None:
    """Restore derived structure after an edit: levels, positions, team rule
    intersections, scoped constraints, the relation web, and the level gauge."""
    org = state.org
    if org.root is None:
        org.relations = set()
        state.level = 0
        return

    def visit(node: OrgNode, depth: int, pos: int) -> None:
        node.level_i = depth
        node.pos_j = pos
        for i, child in enumerate(node.children):
            visit(child, depth + 1, i)

    visit(org.root, 0, 0)

    for node, _, _, _ in org_core.iter_nodes(org):
        if node.children:
            node.rules = rules_engine.whole_rules(node)
            subtree_tasks = {g for n in node.walk() for g in n.goals}
            node.constraints = [
                c
                for c in state.params.constraints
                if c.a in subtree_tasks and c.b in subtree_tasks
            ]

    relations: set[Relation] = set()
    for node, _, _, _ in org_core.iter_nodes(org):
        if not node.children or node.id_robot is None:
            continue
        element_robots = [c.id_robot for c in node.children if c.id_robot is not None]
        for r in element_robots:
            if r != node.id_robot:
                relations.add(Relation(node.id_robot, r, RelationKind.CONTROL))
        for i, a in enumerate(element_robots):
            for b in element_robots[i + 1 :]:
                if a != b:
                    lo, hi = sorted((a, b))
                    relations.add(Relation(lo, hi, RelationKind.COOPERATION))
    org.relations = relations
    state.level = max(n.level_i for n, _, _, _ in org_core.iter_nodes(org))


def _bind_robot_to_org(state: FormationState, robot: str) -> None:
    state.pool.discard(robot)
    if all(r.id_cr != robot for r in state.org.robots):
        state.org.robots.append(state.robots[robot])


def _detach_leaf(state: FormationState, robot: str) -> None:
    leaf = state.leaf_of(robot)
    if leaf is None:
        return
    parent = state.parent_of(leaf.id_ros)
    if parent is None:
        state.org.root = None
    else:
        parent.children.remove(leaf)


def _prune_org_robots(state: FormationState) -> None:
    kept = {n.id_robot for n, _, _, _ in org_core.iter_nodes(state.org) if n.id_robot}
    state.org.robots = [r for r in state.org.robots if r.id_cr in kept]


# --- announcements -----------------------------------------------------------------


def _announce(state: FormationState, item: PendingTask, result: StepResult) -> None:
    t = item.id_task
    task = state.tasks.get(t)
    if task is None or task.status is not TaskStatus.UNASSIGNED:
        return
    leadership = state.is_composite(t)
    is_root = item.parent_node is None
    if leadership:
        reqs = LEADERSHIP_REQUIREMENTS
    elif is_root:
        # whoever wins an atomic root must both organize and execute it alone
        reqs = frozenset(LEADERSHIP_REQUIREMENTS | task.required_capabilities)
        leadership = True
    else:
        reqs = task.required_capabilities
    if item.parent_node is None:
        auctioneer = ENV
    else:
        node = state.node(item.parent_node)
        if node is None:
            return  # owning team vanished; the task was revoked with it
        if node.id_robot is None:
            state.pending.append(item)  # team mid re-election; retry next tick
            return
        auctioneer = node.id_robot
    ann = Announcement(
        id_task=t,
        reward=state.current_reward[t],
        required_capabilities=reqs,
        round=0,
        deadline=state.now + state.params.bid_window,
        auctioneer=auctioneer,
        leadership=leadership,
    )
    state.active_auctions[t] = AuctionState(ann, item.parent_node)
    task.status = TaskStatus.ANNOUNCED
    _broadcast(state, state.active_auctions[t], result)
    result.timers.append(AuctionClosed(tick=ann.deadline + 1, id_task=t, round=ann.round))
    result.notes.append(
        {
            "kind": "announce",
            "task": t,
            "round": ann.round,
            "reward": str(ann.reward),
            "auctioneer": auctioneer,
            "leadership": leadership,
        }
    )


def _audience(state: FormationState, auction: AuctionState) -> list[str]:
    ann = auction.announcement
    return [
        rid
        for rid in sorted(state.robots)
        if state.alive(rid) and org_core.communication_allowed(state.org, ann.auctioneer, rid)
    ]


def _broadcast(state: FormationState, auction: AuctionState, result: StepResult) -> None:
    ann = auction.announcement
    for rid in _audience(state, auction):
        result.messages.append(wire.Message(ann.auctioneer, rid, wire.KIND_ANNOUNCE, ann, state.now))


# --- awards --------------------------------------------------------------------------


def _award(state: FormationState, auction: AuctionState, bid: Bid, result: StepResult) -> None:
    t = bid.id_task
    task = state.tasks[t]
    winner = bid.bidder

    if state.is_composite(t):
        state.history.record_win(state.now, winner, t, bid.price, locks=False)
        state.org.assignments[t] = TaskAssignment(
            t, winner, bid.price, AssignmentMode.LED, tuple(state.task_children[t])
        )
        _install_team(state, t, winner, auction.parent_node)
        task.status = TaskStatus.ASSIGNED
        for child_id in state.task_children[t]:
            if state.tasks[child_id].status is TaskStatus.UNASSIGNED:
                result.timers.append(
                    TaskArrived(tick=state.now, id_task=child_id, parent_node=f"team:{t}")
                )
        _maybe_complete_parent(state, t, result)
    else:
        state.history.record_win(state.now, winner, t, bid.price, locks=True)
        state.org.assignments[t] = TaskAssignment(t, winner, bid.price, AssignmentMode.WON)
        _install_member(state, winner, t, auction.parent_node)
        task.status = TaskStatus.ASSIGNED
        result.messages.append(
            wire.Message(
                auction.announcement.auctioneer,
                winner,
                wire.KIND_AWARD,
                {"task": t, "price": str(bid.price)},
                state.now,
            )
        )
        if state.phase is Phase.EXECUTING:
            _start_execution(state, [(winner, t)], result)

    result.notes.append(
        {
            "kind": "award",
            "task": t,
            "robot": winner,
            "price": str(bid.price),
            "round": bid.round,
            "leadership": state.is_composite(t),
        }
    )
    _renumber(state)


def _install_team(state: FormationState, t: str, leader: str, parent_node: str | None) -> None:
    team = OrgNode(
        id_ros=f"team:{t}",
        id_robot=leader,
        level_i=0,
        pos_j=0,
        goals=[t],
        rules=RuleSet(frozenset(), RuleScope.WHOLE),
    )
    existing_leaf = state.leaf_of(leader)
    if parent_node is None:
        team.children = [existing_leaf if existing_leaf is not None else _new_leaf(state, leader)]
        state.org.root = team
    else:
        parent = state.node(parent_node)
        if parent is None:
            raise ProtocolViolationError(f"award under unknown node {parent_node}")
        if leader == parent.id_robot and parent.children:
            # leadership chain: the leader's own element grows a level
            element = parent.children[0]
            team.children = [element]
            parent.children[0] = team
        elif existing_leaf is not None and existing_leaf in parent.children:
            idx = parent.children.index(existing_leaf)
            team.children = [existing_leaf]
            parent.children[idx] = team
        else:
            team.children = [_new_leaf(state, leader)]
            parent.children.append(team)
    _bind_robot_to_org(state, leader)


def _install_member(state: FormationState, robot: str, t: str, parent_node: str | None) -> None:
    leaf = state.leaf_of(robot)
    if leaf is not None:
        leaf.goals.append(t)
        _bind_robot_to_org(state, robot)
        return
    leaf = _new_leaf(state, robot)
    leaf.goals.append(t)
    if parent_node is None:
        state.org.root = leaf  # single-robot organization
    else:
        parent = state.node(parent_node)
        if parent is None:
            raise ProtocolViolationError(f"award under unknown node {parent_node}")
        parent.children.append(leaf)
    _bind_robot_to_org(state, robot)


def _maybe_complete_parent(state: FormationState, t: str, result: StepResult) -> None:
    """A composite whose children all finished while it was leaderless (or
    freshly awarded) completes as soon as it has an assignee again."""
    children = state.task_children.get(t, [])
    a = state.org.assignments.get(t)
    if (
        a is not None
        and state.tasks[t].status is TaskStatus.ASSIGNED
        and children
        and all(state.tasks[s].status is TaskStatus.COMPLETED for s in children)
    ):
        result.timers.append(TaskCompleted(tick=state.now, id_task=t, robot=a.assignee))


# --- escalation, redecomposition, allocation fallback ----------------------------------


def _close_auction(state: FormationState, event: AuctionClosed, result: StepResult) -> None:
    t = event.id_task
    auction = state.active_auctions.get(t)
    if auction is None:
        if t in state.tasks:
            result.notes.append({"kind": "close_ignored", "task": t})
            return
        raise ProtocolViolationError(f"close for unknown auction {t}")
    if auction.announcement.round != event.round:
        result.notes.append({"kind": "close_stale", "task": t, "round": event.round})
        return

    ann = auction.announcement
    valid: list[Bid] = []
    for bid in auction.bids:
        if not state.alive(bid.bidder):
            continue
        if winner_locked(state.history, bid.bidder, state.now):
            continue
        if ann.leadership and ann.auctioneer != ENV and not _chain_with(state, bid.bidder, t):
            continue
        held = state.robot_tasks(bid.bidder) | {t}
        if not check_assignment(
            RuleSet(state.params.rules_pool), state.params.constraints, {bid.bidder: held}
        ).ok:
            continue
        valid.append(bid)

    winner = select_winner(valid)
    del state.active_auctions[t]
    if winner is not None:
        winning_bid = min((b for b in valid if b.bidder == winner), key=lambda b: b.price)
        _award(state, auction, winning_bid, result)
        _check_formed(state, result)
        return

    tactic = adjust_tactics(ann, state.params.policy)
    if isinstance(tactic, Announcement):
        _reannounce(state, auction, tactic, result)
    elif isinstance(tactic, Redecompose):
        if _apply_redecompose(state, t, tactic, result):
            _check_formed(state, result)
        else:
            escalated = replace(
                ann, reward=ann.reward * (1 + state.params.policy.delta), round=tactic.round
            )
            _reannounce(state, auction, escalated, result)
    else:
        result.notes.append({"kind": "give_up", "task": t})
        if not _replan(state, result):
            state.phase = Phase.FAILED
            result.notes.append({"kind": "formation_failed", "task": t})
        _check_formed(state, result)


def _reannounce(
    state: FormationState, auction: AuctionState, ann: Announcement, result: StepResult
) -> None:
    ann = replace(ann, deadline=state.now + state.params.bid_window)
    state.current_reward[ann.id_task] = ann.reward
    state.tasks[ann.id_task].status = TaskStatus.ANNOUNCED
    state.active_auctions[ann.id_task] = AuctionState(ann, auction.parent_node)
    _broadcast(state, state.active_auctions[ann.id_task], result)
    result.timers.append(AuctionClosed(tick=ann.deadline + 1, id_task=ann.id_task, round=ann.round))
    result.notes.append(
        {"kind": "escalate", "task": ann.id_task, "round": ann.round, "reward": str(ann.reward)}
    )


def _apply_redecompose(
    state: FormationState, t: str, tactic: Redecompose, result: StepResult
) -> bool:
    """Swap the failed task for its next alternative decomposition, if any."""
    task = state.tasks[t]
    parent_id = state.task_parent.get(t)
    used = state.alternatives_used.get(t, 0)
    if parent_id is None or used >= len(task.alternatives):
        return False
    pieces = task.alternatives[used]
    state.alternatives_used[t] = used + 1
    for piece in pieces:
        register_task_tree(state, piece, as_root=False)
        state.task_parent[piece.id_task] = parent_id
    siblings = state.task_children[parent_id]
    at = siblings.index(t)
    state.task_children[parent_id] = siblings[:at] + [p.id_task for p in pieces] + siblings[at + 1 :]
    task.status = TaskStatus.FAILED
    parent_assignment = state.org.assignments.get(parent_id)
    if parent_assignment is not None and parent_assignment.subtask_ids:
        state.org.assignments[parent_id] = replace(
            parent_assignment, subtask_ids=tuple(state.task_children[parent_id])
        )
    owning = f"team:{parent_id}"
    for piece in pieces:
        state.pending.append(PendingTask(piece.id_task, owning))
    result.notes.append(
        {"kind": "redecompose", "task": t, "pieces": [p.id_task for p in pieces], "round": tactic.round}
    )
    return True


def _descendants(state: FormationState, t: str) -> list[str]:
    out: list[str] = []
    stack = list(state.task_children.get(t, []))
    while stack:
        x = stack.pop(0)
        out.append(x)
        stack.extend(state.task_children.get(x, []))
    return out


def _revoke_task(state: FormationState, t: str, reason: str, result: StepResult) -> None:
    task = state.tasks[t]
    assignment = state.org.assignments.pop(t, None)
    if assignment is not None and task.status is TaskStatus.ASSIGNED:
        state.history.record_revocation(state.now, assignment.assignee, t, reason)
        result.notes.append(
            {"kind": "revoked", "task": t, "robot": assignment.assignee, "reason": reason}
        )
    if task.status in (TaskStatus.ASSIGNED, TaskStatus.ANNOUNCED):
        task.status = TaskStatus.UNASSIGNED
    state.active_auctions.pop(t, None)
    state.exec_started.discard(t)


def _dissolve_team(state: FormationState, node_id: str, result: StepResult) -> None:
    """Reset a leaderless team: unfinished subtree tasks return to the parent's
    queue, members go back to the pool, accumulated margin is forfeited."""
    node = state.node(node_id)
    if node is None:
        return
    t = node.goals[0] if node.goals else None
    parent = state.parent_of(node_id)
    freed = sorted({n.id_robot for n in node.walk() if n.id_robot is not None})
    if t is not None:
        for sub in _descendants(state, t):
            if state.tasks[sub].status is not TaskStatus.COMPLETED:
                _revoke_task(state, sub, "team_dissolved", result)
        assignment = state.org.assignments.pop(t, None)
        if assignment is not None:
            state.history.record_revocation(state.now, assignment.assignee, t, "team_dissolved")
        if state.tasks[t].status is not TaskStatus.COMPLETED:
            state.tasks[t].status = TaskStatus.UNASSIGNED
            state.pending.append(PendingTask(t, parent.id_ros if parent is not None else None))
    for rid in freed:
        if state.alive(rid):
            state.pool.add(rid)
    if parent is None:
        state.org.root = None
        state.org.robots = []
    else:
        parent.children.remove(node)
        _prune_org_robots(state)
    result.notes.append(
        {"kind": "dissolved", "node": node_id, "task": t, "forfeited": str(node.utility)}
    )
    _renumber(state)


# --- allocation fallback (society-wide re-plan) -----------------------------------------


def _replan(state: FormationState, result: StepResult) -> bool:
    """Leader allocation without negotiation: find the preference-best feasible
    assignment of every unfinished task and install it wholesale."""
    unfinished = [
        t
        for t in state.effective_tasks()
        if state.tasks[t].status
        in (TaskStatus.UNASSIGNED, TaskStatus.ANNOUNCED, TaskStatus.ASSIGNED)
    ]
    if not unfinished:
        return True
    robots = sorted(r for r in state.robots if state.alive(r))
    fixed_held: dict[str, set[str]] = {
        r: {
            t
            for t, a in state.org.assignments.items()
            if a.assignee == r and state.tasks[t].status is TaskStatus.COMPLETED
        }
        for r in robots
    }

    composites = [t for t in unfinished if state.is_composite(t)]
    atomics = [t for t in unfinished if not state.is_composite(t)]
    order = composites + atomics

    def candidates(t: str) -> list[str]:
        task = state.tasks[t]
        need_leadership = state.is_composite(t) or state.task_parent.get(t) is None
        out = []
        for r in robots:
            rb = state.robots[r]
            if need_leadership and not _leadership_capable(rb):
                continue
            if not state.is_composite(t) and not rb.dominates(task.required_capabilities):
                continue
            out.append(r)
        return out

    parallel_pairs = {
        frozenset((c.a, c.b))
        for c in state.params.constraints
        if c.kind is ConstraintKind.PARALLEL
    }

    def parallel_ok(robot: str, t: str, chosen: dict[str, str]) -> bool:
        held = fixed_held[robot] | {x for x, r in chosen.items() if r == robot}
        return all(frozenset((t, h)) not in parallel_pairs for h in held)

    def chain_ok(robot: str, t: str, chosen: dict[str, str]) -> bool:
        # composites arrive parents-first, so contiguity means each new one
        # hangs off the robot's current deepest composite
        if not state.is_composite(t):
            return True
        mine = [x for x in composites if chosen.get(x) == robot]
        if not mine:
            return True
        deepest = max(mine, key=lambda x: (_task_depth(state, x), x))
        return state.task_parent.get(t) == deepest

    best: dict[str, str] | None = None
    best_key: tuple | None = None

    def search(i: int, chosen: dict[str, str]) -> None:
        nonlocal best, best_key
        if i == len(order):
            team = tuple(sorted(set(chosen.values())))
            key = (len(team), team, tuple(chosen[t] for t in order))
            if best_key is None or key < best_key:
                best, best_key = dict(chosen), key
            return
        t = order[i]
        for r in candidates(t):
            if parallel_ok(r, t, chosen) and chain_ok(r, t, chosen):
                chosen[t] = r
                search(i + 1, chosen)
                del chosen[t]

    search(0, {})
    if best is None:
        return False

    for t in unfinished:
        _revoke_task(state, t, "reallocated", result)
    state.pending.clear()
    state.active_auctions.clear()

    for t in order:
        assignee = best[t]
        price = state.current_reward[t]
        if state.is_composite(t):
            state.org.assignments[t] = TaskAssignment(
                t, assignee, price, AssignmentMode.LED, tuple(state.task_children[t])
            )
        else:
            state.org.assignments[t] = TaskAssignment(t, assignee, price, AssignmentMode.ALLOCATED)
        state.tasks[t].status = TaskStatus.ASSIGNED
        result.notes.append({"kind": "allocated", "task": t, "robot": assignee, "price": str(price)})

    _rebuild_tree(state)
    if state.world is not None and state.root_tasks:
        first_root = state.org.assignments.get(state.root_tasks[0])
        if first_root is not None:
            state.organizer = first_root.assignee
    if state.phase is Phase.EXECUTING:
        fresh = [
            (state.org.assignments[t].assignee, t)
            for t in order
            if not state.is_composite(t) and t not in state.exec_started
        ]
        _start_execution(state, fresh, result)
    return True


def _rebuild_tree(state: FormationState) -> None:
    """Rebuild the whole tree from the assignment record (used after re-plans)."""
    assignments = state.org.assignments
    leaders = {
        a.assignee
        for t, a in assignments.items()
        if state.is_composite(t) and state.tasks[t].status in (TaskStatus.ASSIGNED, TaskStatus.COMPLETED)
    }
    placed: set[str] = set()

    def atomic_goals(robot: str) -> list[str]:
        return sorted(
            x
            for x, xa in assignments.items()
            if xa.assignee == robot and not state.is_composite(x)
        )

    def build(t: str) -> OrgNode | None:
        a = assignments.get(t)
        if a is None or not state.is_composite(t):
            return None
        leader = a.assignee
        team = OrgNode(
            id_ros=f"team:{t}",
            id_robot=leader,
            level_i=0,
            pos_j=0,
            goals=[t],
            rules=RuleSet(frozenset(), RuleScope.WHOLE),
        )
        leader_element: OrgNode | None = None
        rest: list[OrgNode] = []
        for sub in state.task_children.get(t, []):
            sub_team = build(sub)
            if sub_team is None:
                continue
            if sub_team.id_robot == leader:
                leader_element = sub_team
            else:
                rest.append(sub_team)
        for sub in state.task_children.get(t, []):
            sa = assignments.get(sub)
            if sa is None or state.is_composite(sub):
                continue
            rid = sa.assignee
            if rid in placed or rid in leaders or rid == leader:
                continue
            leaf = _new_leaf(state, rid)
            leaf.goals = atomic_goals(rid)
            placed.add(rid)
            rest.append(leaf)
        if leader_element is None:
            leader_element = _new_leaf(state, leader)
            leader_element.goals = atomic_goals(leader)
            placed.add(leader)
        team.children = [leader_element] + rest
        return team

    built = [b for b in (build(t) for t in state.root_tasks) if b is not None]
    root: OrgNode | None = None
    if built:
        root = built[0]
        root.children.extend(built[1:])
    elif len(state.root_tasks) == 1:
        a = assignments.get(state.root_tasks[0])
        if a is not None:
            root = _new_leaf(state, a.assignee)
            root.goals = atomic_goals(a.assignee)
    state.org.root = root
    bound = {n.id_robot for n, _, _, _ in org_core.iter_nodes(state.org) if n.id_robot}
    state.org.robots = [state.robots[r] for r in sorted(bound) if r in state.robots]
    for r in sorted(state.robots):
        if state.alive(r) and r not in bound:
            state.pool.add(r)
        else:
            state.pool.discard(r)
    _renumber(state)


# --- execution ---------------------------------------------------------------------


def _start_execution(
    state: FormationState, assignments: list[tuple[str, str]], result: StepResult
) -> None:
    """Schedule completion timers (and start_work messages) for generic
    missions. Pursuit missions complete through world dynamics instead."""
    if state.world is not None:
        return
    for robot, t in sorted(assignments):
        if t in state.exec_started:
            continue
        start = max(state.busy_until.get(robot, state.now), state.now) + 1
        done = start + max(state.tasks[t].duration, 1) - 1
        state.busy_until[robot] = done
        state.exec_started.add(t)
        result.timers.append(TaskCompleted(tick=done, id_task=t, robot=robot))
        result.messages.append(
            wire.Message(ENV, robot, wire.KIND_START_WORK, {"task": t, "done_at": done}, state.now)
        )


def _ordered_exec(state: FormationState, robot: str) -> list[str]:
    mine = sorted(
        t
        for t, a in state.org.assignments.items()
        if a.assignee == robot
        and not state.is_composite(t)
        and state.tasks[t].status is TaskStatus.ASSIGNED
    )
    orderings = check_assignment(
        RuleSet(state.params.rules_pool), state.params.constraints, {robot: set(mine)}
    ).orderings
    before: dict[str, set[str]] = {t: set() for t in mine}
    for _, first, second in orderings:
        if first in before and second in before:
            before[second].add(first)
    out: list[str] = []
    remaining = set(mine)
    while remaining:
        ready = sorted(t for t in remaining if not (before[t] & remaining))
        if not ready:  # priority cycle; fall back to id order
            ready = sorted(remaining)
        out.append(ready[0])
        remaining.discard(ready[0])
    return out


def _check_formed(state: FormationState, result: StepResult) -> None:
    if state.phase is not Phase.FORMING:
        return
    if state.pending or state.active_auctions:
        return
    statuses = {state.tasks[t].status for t in state.effective_tasks()}
    if statuses and statuses <= {TaskStatus.ASSIGNED, TaskStatus.COMPLETED}:
        state.phase = Phase.EXECUTING
        result.notes.append({"kind": "formed", "level": state.level})
        todo: list[tuple[str, str]] = []
        for robot in sorted({a.assignee for a in state.org.assignments.values()}):
            for t in _ordered_exec(state, robot):
                todo.append((robot, t))
        _start_execution(state, todo, result)


# --- completion -----------------------------------------------------------------------


def _complete_task(state: FormationState, event: TaskCompleted, result: StepResult) -> None:
    t = event.id_task
    task = state.tasks.get(t)
    if task is None:
        raise ProtocolViolationError(f"completion for unknown task {t}")
    assignment = state.org.assignments.get(t)
    if (
        task.status is not TaskStatus.ASSIGNED
        or assignment is None
        or assignment.assignee != event.robot
        or not state.alive(event.robot)
    ):
        result.notes.append({"kind": "completion_ignored", "task": t, "robot": event.robot})
        return
    task.status = TaskStatus.COMPLETED
    state.history.record_completion(state.now, event.robot, t)
    result.notes.append({"kind": "completed", "task": t, "robot": event.robot})

    parent = state.task_parent.get(t)
    if parent is not None:
        siblings = state.task_children[parent]
        if all(state.tasks[s].status is TaskStatus.COMPLETED for s in siblings):
            pa = state.org.assignments.get(parent)
            if pa is not None and state.tasks[parent].status is TaskStatus.ASSIGNED:
                result.timers.append(
                    TaskCompleted(tick=state.now, id_task=parent, robot=pa.assignee)
                )


def _check_mission_done(state: FormationState, result: StepResult) -> None:
    if state.phase in (Phase.DONE, Phase.FAILED):
        return
    if state.world is not None and set(state.world.evaders) - state.world.captured:
        return
    if not state.root_tasks:
        if state.world is not None and state.world.captured:
            # everything was captured before any tree formed; goal met anyway
            state.phase = Phase.DONE
            result.notes.append({"kind": "mission_done", "tick": state.now, "utilities": {}})
        return
    if not all(state.tasks[t].status is TaskStatus.COMPLETED for t in state.root_tasks):
        return
    state.phase = Phase.DONE
    payouts: dict[str, Fraction] = {}
    for t in state.effective_tasks():
        if state.tasks[t].status is not TaskStatus.COMPLETED:
            continue
        if t not in state.org.assignments:
            continue  # goal met without an assignee; nobody to pay
        if state.task_parent.get(t) is None:
            payouts[t] = state.tasks[t].reward
        else:
            payouts[t] = state.org.assignments[t].price
    deltas = org_core.settle_utilities(state.org, payouts)
    result.notes.append(
        {
            "kind": "mission_done",
            "tick": state.now,
            "utilities": {r: str(d) for r, d in sorted(deltas.items())},
        }
    )


# --- membership dynamics -----------------------------------------------------------------


def handle_join(
    state: FormationState, robot: CooperativeRobot, *, pose: tuple[int, int] | None = None
) -> StepResult:
    result = StepResult()
    if robot.id_cr in state.robots:
        raise DuplicateRobotIdError(robot.id_cr)
    state.robots[robot.id_cr] = robot
    state.pool.add(robot.id_cr)
    if state.world is not None and pose is not None:
        speed = int(robot.capability(CapabilityKind.MOVING, "speed"))
        radius = int(robot.capability(CapabilityKind.SENSING, "vision"))
        state.world.robots[robot.id_cr] = pursuit.RobotPose(pose, speed, radius)
    result.notes.append({"kind": "joined", "robot": robot.id_cr})
    for t in sorted(state.active_auctions):
        auction = state.active_auctions[t]
        ann = auction.announcement
        if org_core.communication_allowed(state.org, ann.auctioneer, robot.id_cr):
            result.messages.append(
                wire.Message(ann.auctioneer, robot.id_cr, wire.KIND_ANNOUNCE, ann, state.now)
            )
    return result


def handle_withdrawal(state: FormationState, robot: str, reason: WithdrawReason) -> StepResult:
    result = StepResult()
    if robot not in state.robots or robot in state.dead or robot in state.departed:
        result.notes.append({"kind": "withdraw_noop", "robot": robot})
        return result
    if reason is WithdrawReason.FAILURE:
        state.dead.add(robot)
    else:
        state.departed.add(robot)
    if state.world is not None and robot in state.world.robots:
        state.world.robots[robot].alive = False
    if state.organizer == robot:
        state.organizer = None

    was_pooled = robot in state.pool
    state.pool.discard(robot)
    led = state.leads(robot)
    had_leaf = state.leaf_of(robot) is not None
    if was_pooled and not led and not had_leaf:
        result.notes.append({"kind": "withdrew_idle", "robot": robot, "reason": reason.value})
        return result

    # the robot's own unfinished work returns to the queue
    for t in sorted(state.robot_tasks(robot)):
        task = state.tasks[t]
        assignment = state.org.assignments[t]
        if task.status is not TaskStatus.ASSIGNED or assignment.mode is AssignmentMode.LED:
            continue
        _revoke_task(state, t, reason.value, result)
        parent = state.task_parent.get(t)
        state.pending.append(PendingTask(t, f"team:{parent}" if parent is not None else None))

    _detach_leaf(state, robot)
    for team in sorted(led, key=lambda n: -n.level_i):
        reelect_leader(state, team.id_ros, result)

    _prune_org_robots(state)
    _renumber(state)
    result.notes.append({"kind": "withdrew", "robot": robot, "reason": reason.value})
    return result


def reelect_leader(
    state: FormationState, node_id: str, result: StepResult | None = None
) -> StepResult:
    """Least-reward mini-auction among the team's remaining members holding
    the organization ability; the team dissolves if nobody qualifies.

    Resolved synchronously: a leadership change is an internal team mechanism,
    so the winner lock on outstanding task work does not bar a member from
    taking over coordination.
    """
    result = result if result is not None else StepResult()
    node = state.node(node_id)
    if node is None:
        return result
    t = node.goals[0] if node.goals else None
    old = node.id_robot
    node.id_robot = None
    if t is not None:
        assignment = state.org.assignments.pop(t, None)
        if assignment is not None and old is not None:
            state.history.record_revocation(state.now, assignment.assignee, t, "leader_lost")
        if state.tasks[t].status in (TaskStatus.ASSIGNED, TaskStatus.ANNOUNCED):
            state.tasks[t].status = TaskStatus.UNASSIGNED
            state.active_auctions.pop(t, None)
    candidates = sorted(
        c.id_robot
        for c in node.children
        if c.id_robot is not None
        and state.alive(c.id_robot)
        and _leadership_capable(state.robots[c.id_robot])
    )
    if not candidates or t is None:
        _dissolve_team(state, node_id, result)
        return result
    election = Announcement(
        id_task=t,
        reward=state.current_reward[t],
        required_capabilities=LEADERSHIP_REQUIREMENTS,
        deadline=state.now,
        leadership=True,
    )
    offers: list[Bid] = []
    for rid in candidates:
        decision = compute_bid(state.robots[rid], election, _context(state))
        if isinstance(decision, Bid):
            offers.append(decision)
    if not offers:
        _dissolve_team(state, node_id, result)
        return result
    winner = select_winner(offers)
    price = min(b.price for b in offers if b.bidder == winner)
    node.id_robot = winner
    element = next((c for c in node.children if c.id_robot == winner), None)
    if element is not None:
        node.children.remove(element)
        node.children.insert(0, element)
    state.history.record_win(state.now, winner, t, price, locks=False)
    state.org.assignments[t] = TaskAssignment(
        t, winner, price, AssignmentMode.LED, tuple(state.task_children.get(t, ()))
    )
    state.tasks[t].status = TaskStatus.ASSIGNED
    if state.task_parent.get(t) is None and state.world is not None:
        state.organizer = winner
    result.notes.append(
        {
            "kind": "reelected",
            "task": t,
            "robot": winner,
            "price": str(price),
            "offers": {b.bidder: str(b.price) for b in offers},
        }
    )
    _renumber(state)
    _maybe_complete_parent(state, t, result)
    return result


# --- pursuit glue ---------------------------------------------------------------------


def _pursuit_tick(state: FormationState, result: StepResult) -> None:
    world = state.world
    assert world is not None
    params = state.params.pursuit or PursuitParams()

    targets: dict[str, tuple[int, int]] = {}
    for t, (evader, offset) in sorted(state.flank_target.items()):
        if evader in world.captured:
            continue
        assignment = state.org.assignments.get(t)
        if assignment is None or state.tasks[t].status is not TaskStatus.ASSIGNED:
            continue
        if not state.alive(assignment.assignee):
            continue
        center = pursuit.predicted_position(world, evader)
        targets[assignment.assignee] = world.clamp((center[0] + offset[0], center[1] + offset[1]))

    before = set(world.captured)
    pursuit.tick_world(world, targets, capture_quorum=params.capture_quorum)
    for evader in sorted(world.captured - before):
        result.notes.append({"kind": "captured", "evader": evader, "tick": world.tick})
        _finish_evader_tree(state, evader, result)

    for rid in sorted(world.robots):
        if not state.alive(rid):
            continue
        for ev_id, _, tick in pursuit.sense(world, rid):
            state.first_detection.setdefault((rid, ev_id), tick)

    if state.organizer is None:
        eligible = [
            (rid, ev, tick)
            for (rid, ev), tick in state.first_detection.items()
            if state.alive(rid) and _leadership_capable(state.robots[rid])
        ]
        chosen = pursuit.elect_organizer(eligible)
        if chosen is not None:
            state.organizer = chosen
            if state.phase is Phase.IDLE:
                state.phase = Phase.FORMING
            result.notes.append({"kind": "organizer_elected", "robot": chosen})

    if state.organizer is None:
        return
    detected = {ev for (_, ev) in state.first_detection}
    for evader in sorted(detected - state.planned_evaders):
        if evader in world.captured:
            continue
        plan = pursuit.plan_pursuit(
            world,
            state.organizer,
            evader,
            k=params.k,
            base_reward=params.base_reward,
            required_speed=params.required_speed,
        )
        state.planned_evaders.add(evader)
        root = TaskNode(
            id_task=f"capture:{evader}",
            reward=params.mission_reward,
            subtasks=[
                TaskNode(
                    id_task=f"sg:{evader}:{i}",
                    reward=sg.reward,
                    required_capabilities=frozenset(
                        {CapabilityRequirement(CapabilityKind.MOVING, "speed", sg.required_speed)}
                    ),
                )
                for i, sg in enumerate(plan.subgoals)
            ],
        )
        register_task_tree(state, root)
        for i, sg in enumerate(plan.subgoals):
            state.flank_target[f"sg:{evader}:{i}"] = (evader, sg.offset)
            state.flank_cell[f"sg:{evader}:{i}"] = sg.cell
        result.timers.append(
            TaskArrived(
                tick=state.now,
                id_task=root.id_task,
                parent_node=None,
                designated_leader=state.organizer,
            )
        )
        result.notes.append(
            {
                "kind": "planned",
                "evader": evader,
                "organizer": state.organizer,
                "subgoals": [list(sg.cell) for sg in plan.subgoals],
            }
        )


def _finish_evader_tree(state: FormationState, evader: str, result: StepResult) -> None:
    root_id = f"capture:{evader}"
    if root_id not in state.tasks:
        return
    live: list[str] = []
    for t in state.task_children.get(root_id, []):
        task = state.tasks[t]
        if task.status in (TaskStatus.ASSIGNED, TaskStatus.COMPLETED):
            live.append(t)
            if task.status is TaskStatus.ASSIGNED:
                a = state.org.assignments[t]
                result.timers.append(TaskCompleted(tick=state.now, id_task=t, robot=a.assignee))
        else:
            task.status = TaskStatus.FAILED
            state.active_auctions.pop(t, None)
            state.flank_target.pop(t, None)
            result.notes.append({"kind": "superseded_by_capture", "task": t})
    state.task_children[root_id] = live
    state.pending = deque(p for p in state.pending if state.task_parent.get(p.id_task) != root_id)
    root_assignment = state.org.assignments.get(root_id)
    if root_assignment is not None:
        state.org.assignments[root_id] = replace(root_assignment, subtask_ids=tuple(live))
        if not live and state.tasks[root_id].status is TaskStatus.ASSIGNED:
            result.timers.append(
                TaskCompleted(tick=state.now, id_task=root_id, robot=root_assignment.assignee)
            )
    elif state.tasks[root_id].status is not TaskStatus.COMPLETED:
        # captured while the tree was leaderless: the goal is met regardless
        state.active_auctions.pop(root_id, None)
        state.pending = deque(p for p in state.pending if p.id_task != root_id)
        state.tasks[root_id].status = TaskStatus.COMPLETED
        result.notes.append({"kind": "captured_unled", "task": root_id})


# --- the transition function ---------------------------------------------------------


def step(state: FormationState, event: FormationEvent) -> StepResult:
    """Apply one event. Deterministic; mutates the state in place."""
    if event.tick < state.now:
        raise ProtocolViolationError(f"event at tick {event.tick} after state reached {state.now}")
    state.now = event.tick
    result = StepResult()

    if isinstance(event, Tick):
        if state.world is not None and state.phase not in (Phase.DONE, Phase.FAILED):
            _pursuit_tick(state, result)
            _check_mission_done(state, result)
        if state.phase not in (Phase.DONE, Phase.FAILED):
            queued, state.pending = state.pending, deque()
            for item in queued:
                _announce(state, item, result)
    elif isinstance(event, TaskArrived):
        if event.id_task not in state.tasks:
            raise ProtocolViolationError(f"arrival of unregistered task {event.id_task}")
        if state.phase is Phase.IDLE:
            state.phase = Phase.FORMING
        if event.designated_leader is not None:
            _install_designated_root(state, event, result)
        else:
            state.pending.append(PendingTask(event.id_task, event.parent_node))
            result.notes.append({"kind": "queued", "task": event.id_task})
    elif isinstance(event, BidSubmitted):
        _accept_bid(state, event, result)
    elif isinstance(event, AuctionClosed):
        _close_auction(state, event, result)
    elif isinstance(event, TaskCompleted):
        _complete_task(state, event, result)
        _check_mission_done(state, result)
    elif isinstance(event, RobotFailed):
        result = handle_withdrawal(state, event.robot, WithdrawReason.FAILURE)
    elif isinstance(event, RobotWithdrew):
        result = handle_withdrawal(state, event.robot, event.reason)
    elif isinstance(event, RobotJoined):
        result = handle_join(state, event.robot, pose=event.pose)
    else:
        raise ProtocolViolationError(f"unknown event {event!r}")
    return result


def _install_designated_root(
    state: FormationState, event: TaskArrived, result: StepResult
) -> None:
    t = event.id_task
    leader = event.designated_leader
    assert leader is not None
    if not state.alive(leader):
        result.notes.append({"kind": "designation_void", "task": t, "robot": leader})
        return
    state.org.assignments[t] = TaskAssignment(
        t, leader, Fraction(0), AssignmentMode.LED, tuple(state.task_children.get(t, ()))
    )
    state.history.record_win(state.now, leader, t, Fraction(0), locks=False)
    parent = state.org.root.id_ros if state.org.root is not None else None
    _install_team(state, t, leader, parent)
    state.tasks[t].status = TaskStatus.ASSIGNED
    for child in state.task_children.get(t, []):
        if state.tasks[child].status is TaskStatus.UNASSIGNED:
            result.timers.append(TaskArrived(tick=state.now, id_task=child, parent_node=f"team:{t}"))
    result.notes.append({"kind": "designated_leader", "task": t, "robot": leader})
    _renumber(state)


def _accept_bid(state: FormationState, event: BidSubmitted, result: StepResult) -> None:
    bid = event.bid
    auction = state.active_auctions.get(bid.id_task)
    if auction is None:
        if bid.id_task in state.tasks:
            result.notes.append({"kind": "void_bid", "task": bid.id_task, "robot": bid.bidder})
            return
        raise ProtocolViolationError(f"bid for unknown auction {bid.id_task}")
    ann = auction.announcement
    if bid.round != ann.round:
        result.notes.append({"kind": "stale_bid", "task": bid.id_task, "robot": bid.bidder})
        return
    if event.tick > ann.deadline:
        result.notes.append(
            {"kind": "late_bid", "task": bid.id_task, "robot": bid.bidder, "deadline": ann.deadline}
        )
        return
    if winner_locked(state.history, bid.bidder, bid.sent_at):
        result.notes.append(
            {
                "kind": "protocol_violation",
                "why": "locked_bid",
                "task": bid.id_task,
                "robot": bid.bidder,
            }
        )
        return
    if any(b.bidder == bid.bidder for b in auction.bids):
        result.notes.append({"kind": "duplicate_bid", "task": bid.id_task, "robot": bid.bidder})
        return
    auction.bids.append(bid)
    state.history.record_bid(bid.sent_at, event.tick, bid.bidder, bid.id_task, bid.price, bid.round)
    result.notes.append(
        {
            "kind": "bid",
            "task": bid.id_task,
            "robot": bid.bidder,
            "price": str(bid.price),
            "round": bid.round,
        }
    )


# --- snapshots / hashing ---------------------------------------------------------------


def state_snapshot(state: FormationState) -> dict:
    return {
        "now": state.now,
        "phase": state.phase.value,
        "level": state.level,
        "pool": sorted(state.pool),
        "dead": sorted(state.dead),
        "departed": sorted(state.departed),
        "pending": [[p.id_task, p.parent_node] for p in state.pending],
        "auctions": {
            t: {
                "round": a.announcement.round,
                "reward": str(a.announcement.reward),
                "deadline": a.announcement.deadline,
                "bids": [[b.bidder, str(b.price), b.round, b.sent_at] for b in a.bids],
            }
            for t, a in sorted(state.active_auctions.items())
        },
        "tasks": {
            t: {"status": state.tasks[t].status.value, "reward": str(state.current_reward[t])}
            for t in sorted(state.tasks)
        },
        "org": org_core.snapshot_dict(state.org),
        "busy": dict(sorted(state.busy_until.items())),
        "exec_started": sorted(state.exec_started),
        "organizer": state.organizer,
        "planned": sorted(state.planned_evaders),
        "detections": sorted([r, e, t] for (r, e), t in state.first_detection.items()),
        "world": pursuit.world_snapshot(state.world) if state.world is not None else None,
    }


def state_hash(state: FormationState) -> str:
    payload = json.dumps(state_snapshot(state), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


# --- synchronous formation ----------------------------------------------------------------


def form(
    task: TaskNode,
    robots: list[CooperativeRobot],
    params: EngineParams | None = None,
    *,
    max_ticks: int = 500,
) -> Organization:
    """Run the formation machine to completion for one task tree.

    Returns the formed organization or raises FormationError when no
    capability- and rule-respecting assignment exists.
    """
    from .simnet import NetConfig, Scheduler  # simnet drives this module at runtime

    if not robots:
        raise FormationError("Unfillable", "no robots")
    state = new_state(robots, params or EngineParams())
    register_task_tree(state, task)
    scheduler = Scheduler(state, NetConfig())
    scheduler.push_event(TaskArrived(tick=0, id_task=task.id_task, parent_node=None))
    scheduler.run(
        until=max_ticks,
        stop_when=lambda s: s.phase in (Phase.EXECUTING, Phase.DONE, Phase.FAILED),
    )
    if state.phase in (Phase.EXECUTING, Phase.DONE):
        return state.org
    raise FormationError("Unfillable", task.id_task)
