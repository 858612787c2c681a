"""One-step quantized network coding pipeline.

Slot 1: every edge broadcasts a quantized copy of its tail's message.
Each node then forms a single +-kappa linear combination of what it heard
plus its own message, quantizes it once, and the combination is routed
bit-exactly to the gateway. Collecting the m delivered packets gives a
linear measurement system Z = Psi @ X + N_eff whose only noise is realized
quantization error.

Combination coefficients are +-1 on the wire with the kappa scaling folded
in at the decoder; every quantity stored here (Z, noise, steps) is already
in decoder units, which is numerically identical to combining with +-kappa
directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import csv

import numpy as np

from .netgraph import NetworkGraph
from .quantize import UniformQuantizer, make_quantizer, near_lossless_quantizer
from .slotted import Packet, SlotTrace, deliver
from .messages import MessageEnsemble


def kappa_theorem(n: int, num_edges: int) -> float:
    """Coefficient magnitude sqrt(2 n^2 / (n + |E|)) used by the recovery guarantee."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return float(np.sqrt(2.0 * n * n / (n + num_edges)))


@dataclass(frozen=True)
class CoefficientSet:
    """Per-node and per-incoming-edge coefficients, all of magnitude kappa.

    beta is indexed by edge id - 1; the edge's head is the node applying it.
    """

    kappa: float
    alpha: np.ndarray
    beta: np.ndarray
    seed: object = None


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_coefficients(g: NetworkGraph, kappa: float, seed=None) -> CoefficientSet:
    """Independent fair signs, magnitude kappa, for alpha_v and beta_(v,e)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    rng = _as_rng(seed)
    alpha = kappa * (2.0 * rng.integers(0, 2, size=g.n) - 1.0)
    beta = kappa * (2.0 * rng.integers(0, 2, size=len(g.edges)) - 1.0)
    return CoefficientSet(kappa=kappa, alpha=alpha, beta=beta, seed=seed)


def _quantize_grouped(quantizers: Sequence[UniformQuantizer], values: np.ndarray):
    """Vectorized quantization with one call per distinct quantizer."""
    values = np.asarray(values, dtype=float)
    out_v = np.empty_like(values)
    out_e = np.empty_like(values)
    steps = np.empty_like(values)
    groups: dict[tuple, list[int]] = {}
    for i, q in enumerate(quantizers):
        groups.setdefault((q.lo, q.hi, q.levels), []).append(i)
    for key, idx in groups.items():
        q = UniformQuantizer(*key)
        idx = np.asarray(idx)
        v, e = q.quantize(values[idx])
        out_v[idx] = v
        out_e[idx] = e
        steps[idx] = q.step
    return out_v, out_e, steps


@dataclass(frozen=True)
class Phase1Result:
    """Per-edge broadcast values Y_e, realized errors N_e, quantizer steps."""

    y2: np.ndarray
    n2: np.ndarray
    steps: np.ndarray


def message_quantizers(g: NetworkGraph, sigma_s: float, L: int,
                       range_sigma: float = 4.0) -> list[UniformQuantizer]:
    """Per-edge quantizer for raw messages: range +-range_sigma*sigma_s,
    2**(L*C_e) levels."""
    return [make_quantizer(range_sigma, sigma_s, L, e.capacity) for e in g.edges]


def packet_quantizers(g: NetworkGraph, kappa: float, sigma_s: float, L: int,
                      range_sigma: float = 4.0) -> list[UniformQuantizer]:
    """Per-node quantizer for combined packets.

    A combination sums 1 + |In(v)| terms of scale sigma_s, so the range grows
    with sqrt(1 + |In(v)|); the kappa factor keeps the range in decoder units.
    Level count follows the capacity of the node's first route edge.
    """
    default_cap = g.edges[0].capacity if g.edges else 1
    qs = []
    for v in range(1, g.n + 1):
        route = g.route_table[v].edges
        cap = route[0].capacity if route else default_cap
        sigma_v = kappa * sigma_s * np.sqrt(1.0 + len(g.in_edges(v)))
        qs.append(make_quantizer(range_sigma, sigma_v, L, cap))
    return qs


def phase1_broadcast(g: NetworkGraph, X: np.ndarray,
                     quantizers: UniformQuantizer | Sequence[UniformQuantizer]) -> Phase1Result:
    """Slot-1 broadcast: every edge carries a quantized copy of its tail's message."""
    if isinstance(quantizers, UniformQuantizer):
        quantizers = [quantizers] * len(g.edges)
    tails = np.array([e.tail for e in g.edges], dtype=int)
    y2, n2, steps = _quantize_grouped(quantizers, X[tails - 1])
    return Phase1Result(y2=y2, n2=n2, steps=steps)


def combine(g: NetworkGraph, coeffs: CoefficientSet, X: np.ndarray,
            y2: np.ndarray) -> np.ndarray:
    """P_v = sum over incoming edges of beta * Y_e plus alpha_v * X_v."""
    P = coeffs.alpha * X
    heads = np.array([e.head for e in g.edges], dtype=int)
    np.add.at(P, heads - 1, coeffs.beta * y2)
    return P


@dataclass(frozen=True)
class DeliveredSet:
    """Packets that reached the gateway, in row order (arrival slot, node id)."""

    nodes: list[int]
    z: np.ndarray
    n3: np.ndarray
    out_steps: np.ndarray
    delays: np.ndarray


def select_and_deliver(g: NetworkGraph, P: np.ndarray, m_target: int,
                       quantizers: Sequence[UniformQuantizer], seed=None,
                       trace: SlotTrace | None = None) -> DeliveredSet:
    """Forward each P_v with probability m_target / n over shortest routes.

    The packet is quantized once at its source (by the node's packet
    quantizer) and relayed bit-exactly; links are lossless. Arrival slots
    come from the slotted FIFO contention model, with the broadcast slot
    counted first (transmissions start in slot 2; the gateway's own packet
    needs no transmission and is available at slot 1).
    """
    if m_target > g.n:
        raise ValueError(f"m_target {m_target} exceeds node count {g.n}")
    if m_target < 0:
        raise ValueError("m_target must be >= 0")
    rng = _as_rng(seed)
    selected = np.flatnonzero(rng.random(g.n) < m_target / g.n) + 1
    return deliver_packets(g, P, selected.tolist(), quantizers, trace=trace)


def deliver_packets(g: NetworkGraph, P: np.ndarray, nodes: Sequence[int],
                    quantizers: Sequence[UniformQuantizer],
                    trace: SlotTrace | None = None) -> DeliveredSet:
    """Quantize and route the packets of an explicit node set (no selection draw)."""
    nodes = sorted(nodes)
    if not nodes:
        return DeliveredSet(nodes=[], z=np.empty(0), n3=np.empty(0),
                            out_steps=np.empty(0), delays=np.empty(0, dtype=int))
    qs = [quantizers[v - 1] for v in nodes]
    z, n3, steps = _quantize_grouped(qs, P[np.asarray(nodes) - 1])
    packets = [Packet(origin=v, route=g.route_table[v].edges) for v in nodes]
    arrivals = deliver(packets, start_slot=2, trace=trace)
    order = sorted(range(len(nodes)), key=lambda i: (arrivals[nodes[i]], nodes[i]))
    return DeliveredSet(
        nodes=[nodes[i] for i in order],
        z=z[order],
        n3=n3[order],
        out_steps=steps[order],
        delays=np.array([arrivals[nodes[i]] for i in order], dtype=int),
    )


@dataclass(frozen=True)
class MeasurementSystem:
    """The assembled linear view of one delivery: Z = Psi @ X + N_eff.

    effective_noise holds the realized per-row quantization noise;
    row_noise_var is the additive-model variance used by the decoders.
    """

    Psi: np.ndarray
    Z: np.ndarray
    row_of: dict[int, int]
    row_noise_var: np.ndarray
    delays: np.ndarray
    effective_noise: np.ndarray | None
    kappa: float

    @property
    def m(self) -> int:
        return self.Psi.shape[0]

    @property
    def n(self) -> int:
        return self.Psi.shape[1]

    def rows_by_slot(self, t: int) -> np.ndarray:
        """Indices of rows whose packets arrived by slot t (a prefix)."""
        return np.flatnonzero(self.delays <= t)

    def identity_residual(self, X: np.ndarray) -> np.ndarray:
        if self.effective_noise is None:
            raise ValueError("realized noise not available")
        return self.Z - self.Psi @ X - self.effective_noise


def assemble(g: NetworkGraph, coeffs: CoefficientSet, delivered: DeliveredSet,
             phase1: Phase1Result) -> MeasurementSystem:
    """Build Psi, Z and the noise accounting from one delivered packet set.

    Row i for node v: alpha_v lands in column v and each incoming edge's beta
    lands in the column of that edge's tail (parallel edges accumulate). The
    row noise combines the packet's own quantization error with the kappa-
    scaled broadcast errors it inherited.
    """
    m = len(delivered.nodes)
    if (len(delivered.z) != m or len(delivered.n3) != m
            or len(delivered.out_steps) != m or len(delivered.delays) != m):
        raise ValueError("delivered set fields have inconsistent lengths")
    if len(set(delivered.nodes)) != m:
        raise ValueError("duplicate nodes in the delivered set")
    row_of = {v: i for i, v in enumerate(delivered.nodes)}
    if any(not 1 <= v <= g.n for v in row_of):
        raise ValueError("delivered node outside 1..n")

    Psi = np.zeros((m, g.n))
    neff = delivered.n3.copy()
    var = delivered.out_steps ** 2 / 12.0
    k2 = coeffs.kappa ** 2
    for i, v in enumerate(delivered.nodes):
        Psi[i, v - 1] += coeffs.alpha[v - 1]
    rows, cols, eidx = [], [], []
    for e in g.edges:
        i = row_of.get(e.head)
        if i is None:
            continue
        rows.append(i)
        cols.append(e.tail - 1)
        eidx.append(e.id - 1)
    if rows:
        rows = np.array(rows)
        eidx = np.array(eidx)
        np.add.at(Psi, (rows, np.array(cols)), coeffs.beta[eidx])
        np.add.at(neff, rows, coeffs.beta[eidx] * phase1.n2[eidx])
        np.add.at(var, rows, k2 * phase1.steps[eidx] ** 2 / 12.0)
    return MeasurementSystem(
        Psi=Psi, Z=delivered.z.copy(), row_of=row_of, row_noise_var=var,
        delays=delivered.delays.copy(), effective_noise=neff, kappa=coeffs.kappa)


@dataclass(frozen=True)
class OneStepRun:
    """Bundle of intermediate artifacts from a full one-step pass."""

    system: MeasurementSystem
    coeffs: CoefficientSet
    phase1: Phase1Result
    delivered: DeliveredSet
    P: np.ndarray


def run_one_step(g: NetworkGraph, ensemble: MessageEnsemble, L: int, seed=None,
                 m_target: int | None = None, kappa: float | None = None,
                 range_sigma: float = 4.0,
                 near_lossless_step: float | None = None) -> OneStepRun:
    """Full pipeline: broadcast, combine, select, deliver, assemble.

    m_target defaults to n (every node forwards its combination; progressive
    decoding then sweeps the effective measurement count). Setting
    near_lossless_step swaps in quantizers of that step size to isolate the
    measurement geometry.
    """
    rng = _as_rng(seed)
    if m_target is None:
        m_target = g.n
    if kappa is None:
        kappa = kappa_theorem(g.n, len(g.edges))
    sigma_s = float(np.sqrt(ensemble.model.sigma_s2))
    if near_lossless_step is None:
        mq = message_quantizers(g, sigma_s, L, range_sigma)
        pq = packet_quantizers(g, kappa, sigma_s, L, range_sigma)
    else:
        mq = [near_lossless_quantizer(sigma_s, range_sigma, near_lossless_step)] * len(g.edges)
        pq = [near_lossless_quantizer(kappa * sigma_s * np.sqrt(1.0 + len(g.in_edges(v))),
                                      range_sigma, near_lossless_step)
              for v in range(1, g.n + 1)]
    coeffs = draw_coefficients(g, kappa, rng)
    p1 = phase1_broadcast(g, ensemble.X, mq)
    P = combine(g, coeffs, ensemble.X, p1.y2)
    delivered = select_and_deliver(g, P, m_target, pq, rng)
    ms = assemble(g, coeffs, delivered, p1)
    return OneStepRun(system=ms, coeffs=coeffs, phase1=p1, delivered=delivered, P=P)


def write_measurement_csv(ms: MeasurementSystem, path: str | Path) -> None:
    """Z, node->row map, noise variances and delays; Psi goes in a matrix file."""
    node_of = {i: v for v, i in ms.row_of.items()}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "node", "z", "noise_var", "delay"])
        for i in range(ms.m):
            w.writerow([i, node_of[i], repr(float(ms.Z[i])),
                        repr(float(ms.row_noise_var[i])), int(ms.delays[i])])


def read_measurement_csv(path: str | Path, psi_path: str | Path,
                         kappa: float) -> MeasurementSystem:
    rows = list(csv.DictReader(open(path, newline="")))
    Psi = np.atleast_2d(np.loadtxt(psi_path))
    z = np.array([float(r["z"]) for r in rows])
    var = np.array([float(r["noise_var"]) for r in rows])
    delays = np.array([int(r["delay"]) for r in rows], dtype=int)
    row_of = {int(r["node"]): int(r["row"]) for r in rows}
    return MeasurementSystem(Psi=Psi, Z=z, row_of=row_of, row_noise_var=var,
                             delays=delays, effective_noise=None, kappa=kappa)
