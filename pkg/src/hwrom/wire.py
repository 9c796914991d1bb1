"""Message envelope passed over the simulated network."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

#: Endpoint id of the environment itself (the scheduler): the initial
#: championship auctioneer, re-election administrator, and work dispatcher.
ENV = "__env__"

#: Message kinds understood by the engine. A robot's interface descriptor is
#: a subset of these; a message whose kind is outside either endpoint's
#: interface is rejected by routing.
KIND_ANNOUNCE = "announce"
KIND_BID = "bid"
KIND_AWARD = "award"
KIND_START_WORK = "start_work"
ALL_KINDS = frozenset({KIND_ANNOUNCE, KIND_BID, KIND_AWARD, KIND_START_WORK})


@dataclass(frozen=True)
class Message:
    sender: str
    to: str
    kind: str
    payload: Any = None
    sent_at: int = 0
