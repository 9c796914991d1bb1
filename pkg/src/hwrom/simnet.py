"""Deterministic discrete-event network and scheduler.

Messages route with configurable latency and seeded drops; the topology rule
(only leaders talk across teams) is enforced per delivery. The scheduler owns
the event heap: it feeds events to the formation machine in (tick, seq)
order, converts outbound messages into future deliveries, and runs the
robot-side bidding responses at delivery time. Everything it does is a pure
function of (config, seed, script), so traces hash identically across runs.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable

from . import formation as fm
from . import org_core, wire
from .market import Bid, Decline
from .wire import ENV, Message


class NetError(Exception):
    pass


class DeadSenderError(NetError):
    pass


class UnknownRobotError(NetError):
    pass


@dataclass(frozen=True)
class NetConfig:
    latency: int = 1
    drop_rate: Fraction = Fraction(0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if not 0 <= self.drop_rate <= 1:
            raise ValueError("drop_rate must be within [0, 1]")


@dataclass(frozen=True)
class Deliver:
    at: int


@dataclass(frozen=True)
class Reject:
    reason: str


@dataclass(frozen=True)
class Drop:
    pass


def _drop_roll(seed: int, msg_seq: int) -> Fraction:
    """Counter-based uniform draw: independent per message, stable under
    insertion of unrelated messages."""
    digest = hashlib.sha256(f"{seed}:{msg_seq}".encode()).digest()
    return Fraction(int.from_bytes(digest[:8], "big"), 2**64)


def route(
    net: NetConfig,
    msg: Message,
    org: org_core.Organization,
    *,
    alive: bool = True,
    msg_seq: int = 0,
    interfaces: dict[str, frozenset[str]] | None = None,
) -> Deliver | Reject | Drop:
    """Decide one message's fate: deliver after latency, reject, or drop."""
    if not alive:
        raise DeadSenderError(msg.sender)
    if interfaces is not None:
        for endpoint in (msg.sender, msg.to):
            if endpoint == ENV:
                continue
            allowed = interfaces.get(endpoint)
            if allowed is not None and allowed and msg.kind not in allowed:
                return Reject("InterfaceMismatch")
    if not org_core.communication_allowed(org, msg.sender, msg.to):
        return Reject("CrossTeamViolation")
    if net.drop_rate > 0 and _drop_roll(net.seed, msg_seq) < net.drop_rate:
        return Drop()
    return Deliver(msg.sent_at + net.latency)


class Scheduler:
    """Single-threaded event loop over one formation state."""

    def __init__(
        self,
        state: fm.FormationState,
        net: NetConfig,
        *,
        record: Callable[[dict], None] | None = None,
        hash_states: bool | None = None,
    ):
        self.state = state
        self.net = net
        self.record = record
        self.hash_states = hash_states if hash_states is not None else record is not None
        self.trace: list[dict] = []
        self._heap: list[tuple[int, int, int, int, object]] = []
        self._seq = 0
        self._msg_seq = 0
        self._ticks_pushed = 0

    # -- queue management ------------------------------------------------
    # Heap key is (tick, lane, seq): the Tick transition runs first within a
    # tick, then everything else in scheduling order. A withdrawal scripted
    # for tick T therefore re-announces at T+1, never within T itself.

    def push_event(self, event: fm.FormationEvent) -> None:
        stamped = replace(event, seq=self._seq)
        lane = 0 if isinstance(event, fm.Tick) else 1
        heapq.heappush(self._heap, (event.tick, lane, self._seq, 0, stamped))
        self._seq += 1

    def _push_delivery(self, at: int, msg: Message) -> None:
        heapq.heappush(self._heap, (at, 1, self._seq, 1, msg))
        self._seq += 1

    def inject_failure(self, robot: str, at: int) -> fm.FormationEvent:
        """Schedule a hardware failure; the formation machine sees RobotFailed."""
        if robot not in self.state.robots:
            raise UnknownRobotError(robot)
        if at < self.state.now:
            raise ValueError(f"cannot schedule a failure in the past (tick {at})")
        event = fm.RobotFailed(tick=at, robot=robot)
        self.push_event(event)
        return event

    # -- logging -----------------------------------------------------------

    def _emit(self, rec: dict) -> None:
        self.trace.append(rec)
        if self.record is not None:
            self.record(rec)

    # -- message plumbing ----------------------------------------------------

    def send(self, msg: Message) -> None:
        seq = self._msg_seq
        self._msg_seq += 1
        alive = msg.sender == ENV or self.state.alive(msg.sender)
        interfaces = {r.id_cr: r.interface for r in self.state.robots.values()}
        try:
            outcome = route(
                self.net, msg, self.state.org, alive=alive, msg_seq=seq, interfaces=interfaces
            )
        except DeadSenderError:
            self._emit(
                {
                    "type": "net",
                    "tick": self.state.now,
                    "msg_seq": seq,
                    "kind": msg.kind,
                    "sender": msg.sender,
                    "to": msg.to,
                    "outcome": "dead_sender",
                }
            )
            return
        rec = {
            "type": "net",
            "tick": self.state.now,
            "msg_seq": seq,
            "kind": msg.kind,
            "sender": msg.sender,
            "to": msg.to,
        }
        if isinstance(outcome, Deliver):
            rec["outcome"] = "deliver"
            rec["at"] = outcome.at
            self._push_delivery(outcome.at, msg)
        elif isinstance(outcome, Reject):
            rec["outcome"] = "reject"
            rec["reason"] = outcome.reason
        else:
            rec["outcome"] = "drop"
        self._emit(rec)

    def _deliver(self, msg: Message, at: int) -> None:
        state = self.state
        if msg.to == ENV:
            if msg.kind == wire.KIND_BID:
                self.push_event(fm.BidSubmitted(tick=at, bid=msg.payload))
            return
        if not state.alive(msg.to):
            return
        if msg.kind == wire.KIND_ANNOUNCE:
            decision = fm.consider_announcement(state, msg.to, msg.payload)
            if isinstance(decision, Bid):
                reply = Message(msg.to, msg.payload.auctioneer, wire.KIND_BID, decision, at)
                self.send(reply)
            elif isinstance(decision, Decline):
                self._emit(
                    {
                        "type": "decline",
                        "tick": at,
                        "robot": decision.bidder,
                        "task": decision.id_task,
                        "reason": decision.reason,
                    }
                )
        elif msg.kind == wire.KIND_BID:
            self.push_event(fm.BidSubmitted(tick=at, bid=msg.payload))
        # award / start_work deliveries are informational for the robot

    # -- the loop ---------------------------------------------------------------

    def run(
        self,
        until: int,
        stop_when: Callable[[fm.FormationState], bool] | None = None,
    ) -> list[dict]:
        """Process events through tick `until` in (tick, seq) order.

        Resumable: a later call with a larger `until` continues where the
        previous one stopped."""
        for t in range(self._ticks_pushed + 1, until + 1):
            self.push_event(fm.Tick(tick=t))
        self._ticks_pushed = max(self._ticks_pushed, until)
        while self._heap and self._heap[0][0] <= until:
            tick, _, _, kind, item = heapq.heappop(self._heap)
            if kind == 1:
                self._deliver(item, tick)  # type: ignore[arg-type]
                continue
            event = item  # type: ignore[assignment]
            result = fm.step(self.state, event)
            rec = {
                "type": "event",
                "tick": event.tick,
                "seq": event.seq,
                "event": type(event).__name__,
                **_event_summary(event),
                "detail": {"notes": result.notes},
                "data": event_to_dict(event),
            }
            if self.hash_states:
                rec["state_hash"] = fm.state_hash(self.state)
            self._emit(rec)
            for m in result.messages:
                self.send(m)
            for timer in result.timers:
                self.push_event(timer)
            if stop_when is not None and stop_when(self.state):
                break
        return self.trace


def run(scheduler: Scheduler, until: int) -> list[dict]:
    """Drive a scheduler to the given tick and return the trace."""
    return scheduler.run(until)


def inject_failure(scheduler: Scheduler, robot: str, at: int) -> fm.FormationEvent:
    """Schedule a hardware failure for a robot at a future tick."""
    return scheduler.inject_failure(robot, at)


def _event_summary(event: fm.FormationEvent) -> dict:
    task = getattr(event, "id_task", None)
    robot = getattr(event, "robot", None)
    if isinstance(robot, org_core.CooperativeRobot):
        robot = robot.id_cr
    if isinstance(event, fm.BidSubmitted):
        task = event.bid.id_task
        robot = event.bid.bidder
        rnd = event.bid.round
    else:
        rnd = getattr(event, "round", None)
    return {"task": task, "robot": robot, "round": rnd}


# --- event (de)serialization for logs -------------------------------------------


def _robot_to_dict(robot: org_core.CooperativeRobot) -> dict:
    return {
        "id": robot.id_cr,
        "capabilities": sorted(
            [c.kind.value, c.subkind, str(c.magnitude)] for c in robot.capabilities
        ),
        "resources": sorted(list(p) for p in robot.resources),
        "interface": sorted(robot.interface),
    }


def robot_from_dict(data: dict) -> org_core.CooperativeRobot:
    return org_core.CooperativeRobot(
        id_cr=data["id"],
        capabilities=frozenset(
            org_core.Capability(org_core.CapabilityKind(k), sub, Fraction(mag))
            for k, sub, mag in data.get("capabilities", [])
        ),
        resources=tuple((name, int(qty)) for name, qty in data.get("resources", [])),
        interface=frozenset(data.get("interface", [])),
    )


def event_to_dict(event: fm.FormationEvent) -> dict:
    base = {"tick": event.tick, "seq": event.seq, "type": type(event).__name__}
    if isinstance(event, fm.TaskArrived):
        base.update(
            id_task=event.id_task,
            parent_node=event.parent_node,
            designated_leader=event.designated_leader,
        )
    elif isinstance(event, fm.BidSubmitted):
        b = event.bid
        base["bid"] = {
            "bidder": b.bidder,
            "id_task": b.id_task,
            "price": str(b.price),
            "computed_cost": str(b.computed_cost),
            "round": b.round,
            "sent_at": b.sent_at,
        }
    elif isinstance(event, fm.AuctionClosed):
        base.update(id_task=event.id_task, round=event.round)
    elif isinstance(event, fm.TaskCompleted):
        base.update(id_task=event.id_task, robot=event.robot)
    elif isinstance(event, fm.RobotWithdrew):
        base.update(robot=event.robot, reason=event.reason.value)
    elif isinstance(event, fm.RobotFailed):
        base.update(robot=event.robot)
    elif isinstance(event, fm.RobotJoined):
        base["robot"] = _robot_to_dict(event.robot)
        base["pose"] = list(event.pose) if event.pose is not None else None
    return base


def event_from_dict(data: dict) -> fm.FormationEvent:
    kind = data["type"]
    tick = data["tick"]
    seq = data.get("seq", -1)
    if kind == "Tick":
        return fm.Tick(tick=tick, seq=seq)
    if kind == "TaskArrived":
        return fm.TaskArrived(
            tick=tick,
            seq=seq,
            id_task=data["id_task"],
            parent_node=data.get("parent_node"),
            designated_leader=data.get("designated_leader"),
        )
    if kind == "BidSubmitted":
        b = data["bid"]
        return fm.BidSubmitted(
            tick=tick,
            seq=seq,
            bid=Bid(
                bidder=b["bidder"],
                id_task=b["id_task"],
                price=Fraction(b["price"]),
                computed_cost=Fraction(b["computed_cost"]),
                round=b["round"],
                sent_at=b["sent_at"],
            ),
        )
    if kind == "AuctionClosed":
        return fm.AuctionClosed(tick=tick, seq=seq, id_task=data["id_task"], round=data["round"])
    if kind == "TaskCompleted":
        return fm.TaskCompleted(tick=tick, seq=seq, id_task=data["id_task"], robot=data["robot"])
    if kind == "RobotWithdrew":
        return fm.RobotWithdrew(
            tick=tick, seq=seq, robot=data["robot"], reason=fm.WithdrawReason(data["reason"])
        )
    if kind == "RobotFailed":
        return fm.RobotFailed(tick=tick, seq=seq, robot=data["robot"])
    if kind == "RobotJoined":
        return fm.RobotJoined(
            tick=tick,
            seq=seq,
            robot=robot_from_dict(data["robot"]),
            pose=tuple(data["pose"]) if data.get("pose") else None,
        )
    raise ValueError(f"unknown event type {kind!r}")
