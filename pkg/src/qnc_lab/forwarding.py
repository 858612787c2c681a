"""Routing baseline: quantize each message at its source and ship it over
the shortest route, tracking when every packet reaches the gateway."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .netgraph import NetworkGraph
from .quantize import UniformQuantizer
from .slotted import Packet, SlotTrace, deliver


@dataclass(frozen=True)
class DeliverySchedule:
    """Arrival slot and delivered (quantized) value per node."""

    n: int
    arrival_slot: dict[int, int]
    delivered_value: dict[int, float]

    @property
    def last_slot(self) -> int:
        return max(self.arrival_slot.values())


def simulate_forwarding(g: NetworkGraph, X: np.ndarray, quantizer: UniformQuantizer,
                        trace: SlotTrace | None = None) -> DeliverySchedule:
    """Quantize every message once at its source and route it to the gateway.

    Transmissions start in slot 1; the gateway's own message arrives at
    slot 0. Contention follows the shared slotted FIFO model.
    """
    q_values = quantizer.quantize(X).value
    packets = [Packet(origin=v, route=g.route_table[v].edges) for v in range(1, g.n + 1)]
    arrivals = deliver(packets, start_slot=1, trace=trace)
    return DeliverySchedule(
        n=g.n,
        arrival_slot=arrivals,
        delivered_value={v: float(q_values[v - 1]) for v in range(1, g.n + 1)},
    )


def progressive_estimate(sched: DeliverySchedule, t: int, prior_mean: float = 0.0) -> np.ndarray:
    """Estimate at slot t: delivered values where available, prior mean elsewhere."""
    if t < 0:
        raise ValueError("t must be >= 0")
    x_hat = np.full(sched.n, prior_mean, dtype=float)
    for v, slot in sched.arrival_slot.items():
        if slot <= t:
            x_hat[v - 1] = sched.delivered_value[v]
    return x_hat


def delivered_count(sched: DeliverySchedule, t: int) -> int:
    return sum(1 for slot in sched.arrival_slot.values() if slot <= t)


def write_schedule_csv(sched: DeliverySchedule, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v", "arrival_slot", "value"])
        for v in range(1, sched.n + 1):
            w.writerow([v, sched.arrival_slot[v], repr(sched.delivered_value[v])])
