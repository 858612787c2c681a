"""Slotted store-and-forward delivery shared by both transmission schemes.

One packet per edge per slot, FIFO queues per edge, deterministic tie-break
by origin node id. A packet with an empty route is already at the decoder
and is assigned slot start_slot - 1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .netgraph import Edge


@dataclass
class Packet:
    origin: int
    route: tuple[Edge, ...]
    leg: int = 0  # index of the next route edge to traverse


@dataclass
class SlotTrace:
    """Per-slot queue observations, used by the work-conservation tests."""

    events: list[tuple[int, int, int, bool]] = field(default_factory=list)

    def record(self, slot: int, edge_id: int, backlog: int, sent: bool) -> None:
        self.events.append((slot, edge_id, backlog, sent))


def deliver(packets: list[Packet], start_slot: int, trace: SlotTrace | None = None) -> dict[int, int]:
    """Run the slotted simulation; returns origin -> arrival slot at the gateway.

    Transmissions begin in `start_slot`; a queued packet advances one edge per
    slot. All packets are enqueued simultaneously before the first slot, in
    origin-id order, as are simultaneous handoffs within a slot.
    """
    arrivals: dict[int, int] = {}
    queues: dict[int, deque[Packet]] = {}
    edge_order: list[int] = []
    edge_by_id: dict[int, Edge] = {}

    def enqueue(p: Packet) -> None:
        e = p.route[p.leg]
        if e.id not in queues:
            queues[e.id] = deque()
            edge_order.append(e.id)
            edge_by_id[e.id] = e
        queues[e.id].append(p)

    for p in sorted(packets, key=lambda p: p.origin):
        if not p.route:
            arrivals[p.origin] = start_slot - 1
        else:
            enqueue(p)

    slot = start_slot
    pending = sum(len(q) for q in queues.values())
    max_slots = start_slot + pending * (1 + max((len(p.route) for p in packets), default=0)) + 1
    while pending:
        if slot > max_slots:
            raise RuntimeError("delivery did not terminate; routes inconsistent")
        handoffs: list[Packet] = []
        for eid in sorted(edge_order):
            q = queues[eid]
            if trace is not None:
                trace.record(slot, eid, len(q), bool(q))
            if not q:
                continue
            p = q.popleft()
            p.leg += 1
            if p.leg == len(p.route):
                arrivals[p.origin] = slot
                pending -= 1
            else:
                handoffs.append(p)
        for p in sorted(handoffs, key=lambda p: p.origin):
            enqueue(p)
        slot += 1
    return arrivals
