"""Command-line entry points.

    qnc-lab deploy --n 100 --edges 400 --seed 7 --out net.txt
    qnc-lab run    --n 100 --edges 400 --sparsity 0.05 --L 8 --seed 7
    qnc-lab sweep  --config sweep.cfg --out results/
    qnc-lab audit  --config audit.cfg --out audit_out/

`audit` writes its report as text and CSV and renders the matching figures
next to them.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import experiment, forwarding, messages, netgraph, qnc, theory_checks
from .decoders import DecoderProblem, cap_snr, snr_db
from .experiment import parse_config, run_sweep
from .quantize import make_quantizer


def _cmd_deploy(args) -> int:
    g = netgraph.generate_network(args.n, args.edges, capacity=args.capacity,
                                  seed=args.seed)
    netgraph.write_edge_list(g, args.out)
    hops = [g.hops(v) for v in range(1, g.n + 1)]
    print(f"deployment written to {args.out}: n={g.n} |E|={len(g.edges)} "
          f"gateway={g.gateway} max_hops={max(hops)}")
    return 0


def _cmd_run(args) -> int:
    rng = np.random.default_rng(args.seed)
    g = netgraph.generate_network(args.n, args.edges, capacity=args.capacity,
                                  seed=rng)
    model = messages.SourceModel(args.n, args.sparsity)
    model.validate_strict()
    phi = messages.random_orthonormal(args.n, rng)
    ens = messages.sample_ensemble(model, phi, rng)
    run = qnc.run_one_step(g, ens, args.L, seed=rng, m_target=args.m_target)
    ms = run.system
    sigma_s = float(np.sqrt(model.sigma_s2))
    fq = make_quantizer(4.0, sigma_s, args.L, args.capacity)
    sched = forwarding.simulate_forwarding(g, ens.X, fq)

    print(f"one-step run: n={args.n} |E|={args.edges} L={args.L} "
          f"kappa={ms.kappa:.4f} delivered={ms.m}")
    print(f"{'t':>4} {'delay':>6} {'qnc rows':>8} {'qnc snr':>9} "
          f"{'fwd count':>9} {'fwd snr':>9}")
    t_max = max(int(ms.delays.max()) if ms.m else 1, sched.last_slot)
    x_hat = np.zeros(args.n)
    prev = -1
    for t in range(0, t_max + 1):
        count = int((ms.delays <= t).sum()) if ms.m else 0
        if count != prev and count > 0:
            problem = DecoderProblem.from_measurement(ms, model, phi,
                                                      rows=np.arange(count))
            x_hat = experiment._decode(problem, args.decoder).x_hat
            prev = count
        q_snr = cap_snr(snr_db(ens.X, x_hat)) if count > 0 else 0.0
        f_hat = forwarding.progressive_estimate(sched, t)
        f_snr = cap_snr(snr_db(ens.X, f_hat))
        print(f"{t:>4} {t * args.L:>6} {count:>8} {q_snr:>9.3f} "
              f"{forwarding.delivered_count(sched, t):>9} {f_snr:>9.3f}")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        netgraph.write_edge_list(g, out / "network.txt")
        messages.write_ensemble_csv(ens, out / "ensemble.csv")
        messages.write_matrix(phi, out / "phi.txt")
        messages.write_matrix(ms.Psi, out / "psi.txt")
        qnc.write_measurement_csv(ms, out / "measurement.csv")
        forwarding.write_schedule_csv(sched, out / "forwarding.csv")
        print(f"instance files written to {out}/")
    return 0


def _parse_kv(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_sweep(cfg)
    experiment.write_records_csv(records, out / "records.csv")
    points = experiment.best_L_envelope(records, cfg.snr_targets)
    experiment.write_envelope_csv(points, out / "envelope.csv", cfg.decoders)
    experiment.write_summary_csv(records, out / "summary.csv")
    experiment.write_metadata(cfg, out / "metadata.txt")
    print(f"sweep complete: {len(records)} records, {len(points)} envelope "
          f"points -> {out}/")
    return 0


def _audit_figures(entry, recovery, out: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    cats = ["zero", "+kappa", "-kappa"]
    x = np.arange(len(cats))
    ax.bar(x - 0.18, [entry.observed[c] for c in cats], width=0.36,
           label="observed")
    ax.bar(x + 0.18, [entry.expected[c] for c in cats], width=0.36,
           label="expected")
    ax.set_xticks(x, cats)
    ax.set_yscale("log")
    ax.set_ylabel("entry probability")
    ax.set_title(f"measurement-matrix entry law (n={entry.n}, |E|={entry.num_edges})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "entry_law.png", dpi=120)
    plt.close(fig)

    if recovery is None:
        return
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.errorbar(recovery.m_grid, recovery.frequencies,
                yerr=[2 * s for s in recovery.standard_errors],
                marker="o", capsize=3, label="empirical")
    ax.axhline(recovery.threshold, color="tab:red", ls="--",
               label=f"target {recovery.threshold:.2f}")
    ax.set_xlabel("received packets m")
    ax.set_ylabel("P(recovery within bound)")
    ax.set_title(f"recovery frequency (n={recovery.n}, |E|={recovery.num_edges}, "
                 f"k={recovery.k}, {recovery.decoder})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "recovery_curve.png", dpi=120)
    plt.close(fig)


def _cmd_audit(args) -> int:
    kv = _parse_kv(args.config)
    cfg = theory_checks.TheoryConfig(
        n=int(kv.get("n", 100)),
        num_edges=int(kv.get("num_edges", 400)),
        k=int(kv.get("k", 5)),
        gamma=float(kv.get("gamma", 1.0)),
        mu=float(kv.get("mu", 0.3)),
        trials=int(kv.get("trials", 1000)),
        sigma_s2=float(kv.get("sigma_s2", 1.0)),
        sigma_z2=float(kv.get("sigma_z2", 0.01)),
    )
    seed = int(kv.get("seed", 0))
    entries = int(kv.get("entries", 100_000))
    model = kv.get("graph_model", "regular")
    entry = theory_checks.audit_entry_law(cfg, seed=seed, min_entries=entries,
                                          graph_model=model)
    moments = theory_checks.audit_moments(cfg, seed=seed + 1,
                                          min_entries=entries,
                                          graph_model=model)
    lines = entry.lines() + [""] + moments.lines()
    recovery = None
    if kv.get("recovery", "0") in ("1", "true", "yes"):
        m_grid = None
        if "m_grid" in kv:
            m_grid = [int(v) for v in kv["m_grid"].split(",")]
        recovery = theory_checks.audit_recovery(
            cfg, decoder=kv.get("decoder", "l1"), seed=seed + 2, m_grid=m_grid)
        lines += [""] + recovery.lines()
    report = "\n".join(lines)
    print(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report + "\n")
        theory_checks.write_entry_law_csv(entry, out / "entry_law.csv")
        if recovery is not None:
            theory_checks.write_recovery_csv(recovery, out / "recovery.csv")
        _audit_figures(entry, recovery, out)
        print(f"report, CSVs and figures written to {out}/")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qnc-lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deploy", help="generate one network deployment")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--edges", type=int, required=True)
    p.add_argument("--capacity", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_deploy)

    p = sub.add_parser("run", help="single instance, both schemes, per-slot SNR")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--edges", type=int, default=400)
    p.add_argument("--sparsity", type=float, default=0.05)
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--capacity", type=int, default=1)
    p.add_argument("--m-target", type=int, default=None)
    p.add_argument("--decoder", choices=["l1", "mmse"], default="mmse")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="full quality-delay sweep to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("audit", help="statistical audits of the theory claims")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_audit)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
