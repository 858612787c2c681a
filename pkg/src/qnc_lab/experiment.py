"""Sweep harness: deployments x block lengths x time, for both schemes.

Emits one record per (scheme, deployment, block length, slot). Pooled
(ratio-of-sums) SNR across deployments drives the best-block-length
envelope; records.csv carries the per-deployment SNR so any aggregation
can be rebuilt downstream, and summary.csv carries both the pooled value
and the mean of per-deployment dB for comparison.

Delay is published in channel uses: a decode at slot t with block length L
costs t*L uses.
"""

from __future__ import annotations

import csv
import multiprocessing
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ._threads import pin_blas_single_thread
from .decoders import (DecoderProblem, cap_snr, default_epsilon, l1_decode,
                       mixture_mmse_decode, pooled_snr_db)
from .forwarding import progressive_estimate, simulate_forwarding
from .messages import SourceModel, random_orthonormal, sample_ensemble
from .netgraph import generate_network
from .qnc import run_one_step
from .quantize import make_quantizer

RECORDS_HEADER = ["scheme", "seed", "edges", "sparsity", "L", "t",
                  "delay_uses", "snr_db", "decoder"]
ENVELOPE_HEADER = ["scheme", "edges", "sparsity", "snr_target_db",
                   "delay_uses", "L"]
SUMMARY_HEADER = ["scheme", "edges", "sparsity", "decoder", "L", "t",
                  "delay_uses", "pooled_snr_db", "mean_snr_db", "deployments"]

DEFAULT_SNR_TARGETS = [float(v) for v in range(2, 41, 2)]


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 100
    num_edges: tuple[int, ...] = (400, 800)
    sparsity: tuple[float, ...] = (0.05, 0.15)
    sigma_s2: float = 1.0
    sigma_z2: float = 0.01
    L_grid: tuple[int, ...] = (2, 4, 6, 8, 10, 12)
    deployments: int = 20
    m_target: int | None = None      # None: every node forwards its packet
    decoders: tuple[str, ...] = ("mmse",)
    seed: int = 1
    capacity: int = 1
    range_sigma: float = 4.0
    placement: str = "bernoulli"
    snr_targets: tuple[float, ...] = tuple(DEFAULT_SNR_TARGETS)

    def __post_init__(self):
        if not self.L_grid:
            raise ValueError("L grid must be nonempty")
        if self.deployments < 1:
            raise ValueError("need at least one deployment")
        for d in self.decoders:
            if d not in ("l1", "mmse"):
                raise ValueError(f"unknown decoder {d!r}")
        for s in self.sparsity:
            SourceModel(self.n, s, self.sigma_s2, self.sigma_z2).validate_strict()


_LIST_KEYS = {"num_edges", "sparsity", "L_grid", "decoders", "snr_targets"}
_INT_KEYS = {"n", "deployments", "m_target", "seed", "capacity"}
_FLOAT_KEYS = {"sigma_s2", "sigma_z2", "range_sigma"}


def parse_config(path: str | Path) -> ExperimentConfig:
    """Flat key = value file; lists are comma-separated; '#' starts a comment."""
    values: dict[str, object] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key = value): {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _LIST_KEYS:
            parts = [v.strip() for v in val.split(",") if v.strip()]
            if key == "decoders":
                values[key] = tuple(parts)
            elif key == "sparsity" or key == "snr_targets":
                values[key] = tuple(float(v) for v in parts)
            else:
                values[key] = tuple(int(v) for v in parts)
        elif key in _INT_KEYS:
            values[key] = None if val.lower() in ("all", "none") else int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key == "placement":
            values[key] = val
        else:
            raise ValueError(f"unknown config key {key!r}")
    return ExperimentConfig(**values)


@dataclass(frozen=True)
class ExperimentRecord:
    scheme: str
    seed: int
    edges: int
    sparsity: float
    L: int
    t: int
    delay_uses: int
    snr_db: float
    decoder: str
    signal_energy: float = field(compare=False, default=0.0)
    error_energy: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class EnvelopePoint:
    scheme: str
    edges: int
    sparsity: float
    decoder: str
    snr_target_db: float
    delay_uses: int
    L: int


def _deployment_seed(base: int, edges: int, sparsity: float, d: int) -> tuple[int, np.random.Generator]:
    ss = np.random.SeedSequence([base, edges, int(round(sparsity * 10 ** 6)), d])
    label = int(ss.generate_state(1, np.uint32)[0])
    return label, np.random.default_rng(ss)


def _decode(problem: DecoderProblem, decoder: str, q_init=None):
    if decoder == "l1":
        return l1_decode(problem, default_epsilon(problem))
    return mixture_mmse_decode(problem, q_init=q_init)


def _qnc_error_series(ms, model, phi, X, decoder) -> list[float]:
    """Squared reconstruction error after each slot 1..last arrival.

    Progressive decodes warm-start the mixture decoder from the previous
    slot's state responsibilities.
    """
    n = model.n
    T = int(ms.delays.max()) if ms.m else 1
    errors = []
    x_hat = np.zeros(n)
    prev = -1
    q_warm = None
    for t in range(1, T + 1):
        count = int((ms.delays <= t).sum())
        if count != prev:
            if count == 0:
                x_hat = np.zeros(n)
            else:
                problem = DecoderProblem.from_measurement(
                    ms, model, phi, rows=np.arange(count))
                res = _decode(problem, decoder, q_init=q_warm)
                x_hat = res.x_hat
                q_warm = res.state_probs
            prev = count
        diff = X - x_hat
        errors.append(float(diff @ diff))
    return errors


def _deployment_worker(args) -> list[tuple]:
    """Both schemes for one deployment; returns raw per-series entries."""
    pin_blas_single_thread()
    cfg, edges, sparsity, d = args
    model = SourceModel(cfg.n, sparsity, cfg.sigma_s2, cfg.sigma_z2)
    sigma_s = float(np.sqrt(cfg.sigma_s2))
    seed_label, rng = _deployment_seed(cfg.seed, edges, sparsity, d)
    g = generate_network(cfg.n, edges, capacity=cfg.capacity, seed=rng)
    phi = random_orthonormal(cfg.n, rng)
    ens = sample_ensemble(model, phi, rng, placement=cfg.placement)
    sig = float(ens.X @ ens.X)
    out = []
    for L in cfg.L_grid:
        run = run_one_step(g, ens, L, seed=rng, m_target=cfg.m_target,
                           range_sigma=cfg.range_sigma)
        for dec in cfg.decoders:
            errs = _qnc_error_series(run.system, model, phi, ens.X, dec)
            out.append((("qnc", dec, L), seed_label, sig, errs, 1))
        fq = make_quantizer(cfg.range_sigma, sigma_s, L, cfg.capacity)
        sched = simulate_forwarding(g, ens.X, fq)
        errs = []
        for t in range(0, sched.last_slot + 1):
            diff = ens.X - progressive_estimate(sched, t)
            errs.append(float(diff @ diff))
        out.append((("forwarding", "none", L), seed_label, sig, errs, 0))
    return out


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[ExperimentRecord]:
    """Simulate both schemes over the configured grid; returns sorted records.

    Deployments fan out over a process pool; per-deployment seeds are
    derived from the config seed up front and records are canonically
    sorted, so the output is identical for any worker count.
    """
    if workers is None:
        workers = os.cpu_count() or 1
    pin_blas_single_thread()
    records: list[ExperimentRecord] = []
    for edges in cfg.num_edges:
        for sparsity in cfg.sparsity:
            jobs = [(cfg, edges, sparsity, d) for d in range(cfg.deployments)]
            if workers > 1 and len(jobs) > 1:
                with multiprocessing.get_context("fork").Pool(workers) as pool:
                    results = pool.map(_deployment_worker, jobs, chunksize=1)
            else:
                results = [_deployment_worker(job) for job in jobs]
            # series[(scheme, decoder, L)] -> list of (seed, signal_energy, errors, t0)
            series: dict[tuple, list] = {}
            for result in results:
                for key, seed_label, sig, errs, t0 in result:
                    series.setdefault(key, []).append((seed_label, sig, errs, t0))
            for (scheme, dec, L), entries in series.items():
                t0 = entries[0][3]
                t_max = max(t0 + len(e[2]) - 1 for e in entries)
                for seed_label, sig, errs, _ in entries:
                    for t in range(t0, t_max + 1):
                        err = errs[min(t - t0, len(errs) - 1)]
                        snr = cap_snr(10.0 * np.log10(sig / err)) if err > 0 \
                            else cap_snr(float("inf"))
                        records.append(ExperimentRecord(
                            scheme=scheme, seed=seed_label, edges=edges,
                            sparsity=sparsity, L=L, t=t, delay_uses=t * L,
                            snr_db=snr, decoder=dec,
                            signal_energy=sig, error_energy=err))
    records.sort(key=lambda r: (r.edges, r.sparsity, r.scheme, r.decoder,
                                r.L, r.seed, r.t))
    return records


def pooled_summary(records: list[ExperimentRecord]) -> list[dict]:
    """Pooled and mean-dB SNR per (scheme, edges, sparsity, decoder, L, t)."""
    groups: dict[tuple, list[ExperimentRecord]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.edges, r.sparsity, r.decoder, r.L, r.t),
                          []).append(r)
    out = []
    for key in sorted(groups):
        rows = groups[key]
        scheme, edges, sparsity, dec, L, t = key
        pooled = cap_snr(pooled_snr_db([r.signal_energy for r in rows],
                                       [r.error_energy for r in rows]))
        mean_db = float(np.mean([r.snr_db for r in rows]))
        out.append(dict(scheme=scheme, edges=edges, sparsity=sparsity,
                        decoder=dec, L=L, t=t, delay_uses=t * L,
                        pooled_snr_db=pooled, mean_snr_db=mean_db,
                        deployments=len(rows)))
    return out


def best_L_envelope(records: list[ExperimentRecord],
                    snr_grid) -> list[EnvelopePoint]:
    """Minimum delay over (L, t) reaching each pooled-SNR target, per series.

    Targets a series cannot reach are absent from the result.
    """
    if not records:
        raise ValueError("no records to build an envelope from")
    summary = pooled_summary(records)
    groups: dict[tuple, list[dict]] = {}
    for row in summary:
        groups.setdefault((row["scheme"], row["edges"], row["sparsity"],
                           row["decoder"]), []).append(row)
    points = []
    for key in sorted(groups):
        scheme, edges, sparsity, dec = key
        rows = groups[key]
        for target in snr_grid:
            feas = [(r["delay_uses"], r["L"]) for r in rows
                    if r["pooled_snr_db"] >= target]
            if not feas:
                continue
            delay, L = min(feas)
            points.append(EnvelopePoint(scheme=scheme, edges=edges,
                                        sparsity=sparsity, decoder=dec,
                                        snr_target_db=float(target),
                                        delay_uses=delay, L=L))
    return points


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_records_csv(records: list[ExperimentRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORDS_HEADER)
        for r in records:
            w.writerow([r.scheme, r.seed, r.edges, repr(r.sparsity), r.L, r.t,
                        r.delay_uses, _fmt(r.snr_db), r.decoder])


def write_envelope_csv(points: list[EnvelopePoint], path: str | Path,
                       decoders: tuple[str, ...] = ("mmse",)) -> None:
    """Pinned envelope schema; with several decoders configured the scheme
    column carries the decoder tag so series stay distinguishable."""
    multi = len(decoders) > 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENVELOPE_HEADER)
        for p in points:
            label = p.scheme
            if multi and p.scheme == "qnc":
                label = f"qnc+{p.decoder}"
            w.writerow([label, p.edges, repr(p.sparsity),
                        _fmt(p.snr_target_db), p.delay_uses, p.L])


def write_summary_csv(records: list[ExperimentRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for row in pooled_summary(records):
            w.writerow([row["scheme"], row["edges"], repr(row["sparsity"]),
                        row["decoder"], row["L"], row["t"], row["delay_uses"],
                        _fmt(row["pooled_snr_db"]), _fmt(row["mean_snr_db"]),
                        row["deployments"]])


def write_metadata(cfg: ExperimentConfig, path: str | Path) -> None:
    lines = ["sweep conventions:",
             "  delay_uses = slot * L (channel uses per delivered decode)",
             "  undelivered messages are estimated by the prior mean 0",
             "  snr_db is per-deployment and capped at 120 dB;"
             " pooled (ratio-of-sums) values are in summary.csv",
             f"  message quantizer range: +-{cfg.range_sigma} sigma_s,"
             " packet range scaled by kappa*sqrt(1+indegree)",
             "config:"]
    for key, val in asdict(cfg).items():
        lines.append(f"  {key} = {val}")
    Path(path).write_text("\n".join(lines) + "\n")
