"""Auction protocol: announcements, bid computation, least-reward selection,
and the adjustment tactics applied when an auction attracts no winner."""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable

from .org_core import CapabilityRequirement, CooperativeRobot
from .wire import ENV

__all__ = [
    "ENV",
    "Announcement",
    "Bid",
    "Decline",
    "ScenarioContext",
    "AdjustPolicy",
    "Redecompose",
    "GiveUp",
    "compute_bid",
    "select_winner",
    "adjust_tactics",
    "MarketError",
    "MixedTaskBidsError",
    "LockedBidderError",
    "CostUnavailableError",
]


class MarketError(Exception):
    pass


class MixedTaskBidsError(MarketError):
    """Bids for different tasks or rounds were mixed into one selection."""


class LockedBidderError(MarketError):
    """compute_bid was invoked for a robot that is winner-locked (protocol bug)."""


class CostUnavailableError(MarketError):
    """The scenario cannot price this robot/task pair (e.g. a robot that cannot move)."""


@dataclass(frozen=True)
class Announcement:
    """A task put out to bid: the offered income and what ability it takes."""

    id_task: str
    reward: Fraction
    required_capabilities: frozenset[CapabilityRequirement]
    round: int = 0
    deadline: int = 0
    auctioneer: str = ENV
    leadership: bool = False

    def __post_init__(self) -> None:
        if self.reward < 0:
            raise ValueError("announcement reward must be >= 0")


@dataclass(frozen=True)
class Bid:
    """A robot's asking price for a task. Never below its own cost."""

    bidder: str
    id_task: str
    price: Fraction
    computed_cost: Fraction
    round: int = 0
    sent_at: int = 0

    def __post_init__(self) -> None:
        if self.price < self.computed_cost:
            raise ValueError("a robot never bids below its own cost")


@dataclass(frozen=True)
class Decline:
    bidder: str
    id_task: str
    reason: str


@dataclass(frozen=True)
class ScenarioContext:
    """What a bidder consults to price a task: margin, scenario cost model,
    lock oracle (None when the caller checked already) and the current tick."""

    cost_of: Callable[[CooperativeRobot, Announcement], Fraction]
    margin: Fraction = Fraction(1, 10)
    is_locked: Callable[[str], bool] | None = None
    now: int = 0


def compute_bid(robot: CooperativeRobot, ann: Announcement, ctx: ScenarioContext) -> Bid | Decline:
    """Price a task for a robot, or decline it.

    Declines when a required capability is missing, the cost cannot be
    computed, or the cost exceeds the offered reward. Otherwise bids
    cost * (1 + margin), capped at the reward. Raises LockedBidderError if
    the ctx lock oracle says the robot must not be bidding at all.
    """
    if ctx.is_locked is not None and ctx.is_locked(robot.id_cr):
        raise LockedBidderError(robot.id_cr)
    missing = [r for r in ann.required_capabilities if not robot.satisfies(r)]
    if missing:
        return Decline(robot.id_cr, ann.id_task, "missing_capability")
    try:
        cost = ctx.cost_of(robot, ann)
    except CostUnavailableError:
        return Decline(robot.id_cr, ann.id_task, "cost_unavailable")
    if cost > ann.reward:
        return Decline(robot.id_cr, ann.id_task, "cost_exceeds_reward")
    price = min(cost * (1 + ctx.margin), ann.reward)
    return Bid(robot.id_cr, ann.id_task, price, cost, ann.round, ctx.now)


def select_winner(bids: list[Bid]) -> str | None:
    """Least-reward selection: the lowest asking price wins, ties go to the
    lowest bidder id. Returns None when nobody bid."""
    if not bids:
        return None
    tasks = {(b.id_task, b.round) for b in bids}
    if len(tasks) > 1:
        raise MixedTaskBidsError(sorted(tasks))
    return min(bids, key=lambda b: (b.price, b.bidder)).bidder


@dataclass(frozen=True)
class AdjustPolicy:
    """Escalation policy for failed auctions.

    Rounds 1..max_reward_rounds raise the reward by a factor of (1 + delta);
    later rounds ask the leader to re-split the task; past max_total_rounds
    the task is given up.
    """

    delta: Fraction = Fraction(1, 4)
    max_reward_rounds: int = 3
    max_total_rounds: int = 5

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be positive so rewards strictly increase")
        if not 0 < self.max_reward_rounds <= self.max_total_rounds:
            raise ValueError("need 0 < max_reward_rounds <= max_total_rounds")


@dataclass(frozen=True)
class Redecompose:
    id_task: str
    round: int


@dataclass(frozen=True)
class GiveUp:
    id_task: str


def adjust_tactics(ann: Announcement, policy: AdjustPolicy) -> Announcement | Redecompose | GiveUp:
    """Next tactic after a round with no winner.

    The returned announcement keeps the stale deadline; the caller re-stamps
    it when actually re-announcing.
    """
    if ann.round >= policy.max_total_rounds:
        return GiveUp(ann.id_task)
    if ann.round >= policy.max_reward_rounds:
        return Redecompose(ann.id_task, ann.round + 1)
    return replace(ann, reward=ann.reward * (1 + policy.delta), round=ann.round + 1)
