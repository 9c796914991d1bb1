"""Behavior norms, cooperation constraints, and rule scoping.

Rules are declarative tags from a closed vocabulary; the engine hard-codes
their enforcement (assignment checks, winner locking, least-reward selection,
fewest-members preference). Rule sets attach to organization nodes and the
whole-organization rule set is the intersection of what every member abides.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

if TYPE_CHECKING:
    from .org_core import OrgNode


class RuleCategory(Enum):
    STRUCTURE_DESIGN = "StructureDesign"
    ORG_FORMING = "OrgForming"
    BIDDING = "Bidding"
    SELECTION = "Selection"
    CUSTOM = "Custom"


class RuleScope(Enum):
    LOCAL = "Local"
    WHOLE = "Whole"


#: Closed predicate vocabulary. Arbitrary user predicates are out of scope.
PREDICATES = frozenset(
    {
        "no_parallel_coassignment",
        "prefer_fewer_members",
        "winner_lock",
        "least_reward",
        "capability_feasible",
    }
)


@dataclass(frozen=True)
class Rule:
    """A named behavior norm. Two rules with the same id must be identical."""

    id_rule: str
    category: RuleCategory
    predicate: str

    def __post_init__(self) -> None:
        if self.predicate not in PREDICATES:
            raise ValueError(f"unknown rule predicate: {self.predicate!r}")


RULE_NO_PARALLEL = Rule("design.no-parallel-coassignment", RuleCategory.STRUCTURE_DESIGN, "no_parallel_coassignment")
RULE_FEWER_MEMBERS = Rule("forming.prefer-fewer-members", RuleCategory.ORG_FORMING, "prefer_fewer_members")
RULE_WINNER_LOCK = Rule("bidding.winner-lock", RuleCategory.BIDDING, "winner_lock")
RULE_LEAST_REWARD = Rule("selection.least-reward", RuleCategory.SELECTION, "least_reward")

#: The default norm set installed on every node unless a scenario overrides it.
STANDARD_RULES = frozenset({RULE_NO_PARALLEL, RULE_FEWER_MEMBERS, RULE_WINNER_LOCK, RULE_LEAST_REWARD})


@dataclass(frozen=True)
class RuleSet:
    rules: frozenset[Rule] = frozenset()
    scope: RuleScope = RuleScope.LOCAL

    def has_predicate(self, predicate: str) -> bool:
        return any(r.predicate == predicate for r in self.rules)


class ConstraintKind(Enum):
    PRIORITY = "Priority"
    SAME_TASK = "SameTask"
    PARALLEL = "Parallel"
    SEQUENCE = "Sequence"
    RESOURCE_CONFLICT = "ResourceConflict"
    ACTION_DEPENDENCY = "ActionDependency"


@dataclass(frozen=True)
class ConstraintRelation:
    """Cooperation/restraint relation between two tasks.

    Parallel and Sequence are symmetric; Priority is antisymmetric (a runs
    before b). SameTask, ResourceConflict and ActionDependency are carried as
    data and impose no assignment check.
    """

    a: str
    b: str
    kind: ConstraintKind

    def involves(self, x: str, y: str) -> bool:
        return {self.a, self.b} == {x, y}


@dataclass(frozen=True)
class Violation:
    code: str
    robot: str
    task_a: str
    task_b: str

    def __str__(self) -> str:
        return f"{self.code}: robot {self.robot} holds {self.task_a} and {self.task_b}"


@dataclass(frozen=True)
class AssignmentCheck:
    """Outcome of an assignment check.

    ``violations`` lists Parallel co-assignments; ``orderings`` records
    (robot, first, second) execution orders required by Priority pairs held
    by the same robot. Priority pairs are legal to co-hold, they just
    constrain the schedule.
    """

    violations: tuple[Violation, ...]
    orderings: tuple[tuple[str, str, str], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_assignment(
    rules: RuleSet,
    constraints: Sequence[ConstraintRelation],
    assignment: Mapping[str, Iterable[str]],
) -> AssignmentCheck:
    """Check a robot -> task-set map against the structure-design norms.

    One violation per robot per Parallel pair it co-holds. Sequence pairs are
    allowed on one robot. The Parallel check only applies when ``rules``
    contains the no_parallel_coassignment predicate.
    """
    enforce_parallel = rules.has_predicate("no_parallel_coassignment")
    violations: list[Violation] = []
    orderings: list[tuple[str, str, str]] = []
    for robot in sorted(assignment):
        held = set(assignment[robot])
        for c in constraints:
            if c.a not in held or c.b not in held or c.a == c.b:
                continue
            if c.kind is ConstraintKind.PARALLEL and enforce_parallel:
                violations.append(Violation("ParallelCoassignment", robot, *sorted((c.a, c.b))))
            elif c.kind is ConstraintKind.PRIORITY:
                orderings.append((robot, c.a, c.b))
    return AssignmentCheck(tuple(violations), tuple(orderings))


def whole_rules(node: "OrgNode") -> RuleSet:
    """Effective rule set of a subtree: the intersection of all members' rules.

    A leaf abides its own rules; an internal node abides only what every
    child abides, so the set shrinks monotonically toward the root.
    """
    if not node.children:
        return RuleSet(node.rules.rules, RuleScope.WHOLE)
    acc: frozenset[Rule] | None = None
    for child in node.children:
        child_rules = whole_rules(child).rules
        acc = child_rules if acc is None else acc & child_rules
    return RuleSet(acc if acc is not None else frozenset(), RuleScope.WHOLE)


@dataclass(frozen=True)
class FormationCandidate:
    """A candidate organization shape offered to the forming-preference rule."""

    structure: object
    members: tuple[str, ...]


def forming_preference(candidates: Sequence[FormationCandidate]) -> list[FormationCandidate]:
    """Rank candidate organizations: fewer members first, then id-lexicographic.

    Fewer members means less communication cost; the tie-break keeps the
    ranking total and deterministic.
    """
    return sorted(candidates, key=lambda c: (len(c.members), tuple(sorted(c.members))))


@dataclass(frozen=True)
class WinRecord:
    tick: int
    robot: str
    id_task: str
    price: object  # Fraction; kept opaque here to avoid an import cycle
    locks: bool = True


@dataclass(frozen=True)
class CompletionRecord:
    tick: int
    robot: str
    id_task: str


@dataclass(frozen=True)
class RevocationRecord:
    tick: int
    robot: str
    id_task: str
    reason: str


@dataclass(frozen=True)
class BidRecord:
    sent_at: int
    arrived_at: int
    robot: str
    id_task: str
    price: object
    round: int


@dataclass
class AuctionHistory:
    """Append-only record of auction activity, the basis of the winner lock."""

    wins: list[WinRecord] = field(default_factory=list)
    completions: list[CompletionRecord] = field(default_factory=list)
    revocations: list[RevocationRecord] = field(default_factory=list)
    bids: list[BidRecord] = field(default_factory=list)

    def record_win(self, tick: int, robot: str, id_task: str, price: object, *, locks: bool = True) -> None:
        self.wins.append(WinRecord(tick, robot, id_task, price, locks))

    def record_completion(self, tick: int, robot: str, id_task: str) -> None:
        self.completions.append(CompletionRecord(tick, robot, id_task))

    def record_revocation(self, tick: int, robot: str, id_task: str, reason: str) -> None:
        self.revocations.append(RevocationRecord(tick, robot, id_task, reason))

    def record_bid(self, sent_at: int, arrived_at: int, robot: str, id_task: str, price: object, round: int) -> None:
        self.bids.append(BidRecord(sent_at, arrived_at, robot, id_task, price, round))


def winner_locked(history: AuctionHistory, robot: str, at: int) -> bool:
    """True iff the robot holds a locking win with no completion by tick ``at``.

    A win at tick t locks from t onward; a completion or revocation at tick t
    releases from t onward.
    """
    for win in history.wins:
        if win.robot != robot or not win.locks or win.tick > at:
            continue
        done = any(
            c.robot == robot and c.id_task == win.id_task and win.tick <= c.tick <= at
            for c in history.completions
        )
        revoked = any(
            r.robot == robot and r.id_task == win.id_task and win.tick <= r.tick <= at
            for r in history.revocations
        )
        if not done and not revoked:
            return True
    return False
