#!/usr/bin/env python3
"""Render the quality-delay figure from the sweep CSVs.

    plot_qnc.py --records records.csv --envelope envelope.csv --out fig.png

One panel per edge count; delivery delay (channel uses) on x, SNR (dB) on y.
Envelope curves carry the legend, one entry per (scheme, sparsity, decoder)
series; the per-block-length record traces are drawn faintly underneath.
Reads only the published CSV columns; exits with the offending column name
if one is missing, and writes nothing for empty inputs.
"""

import argparse
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RECORD_COLUMNS = ["scheme", "seed", "edges", "sparsity", "L", "t",
                  "delay_uses", "snr_db", "decoder"]
ENVELOPE_COLUMNS = ["scheme", "edges", "sparsity", "snr_target_db",
                    "delay_uses", "L"]

PALETTE = ["tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple",
           "tab:brown", "tab:pink", "tab:gray", "tab:olive", "tab:cyan"]


def fail(message, code=2):
    print(message, file=sys.stderr)
    sys.exit(code)


def load_csv(path, required):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                fail(f"missing column '{col}' in {path}")
        rows = list(reader)
    if not rows:
        fail(f"no data rows in {path}", code=3)
    return rows


def series_label(scheme, sparsity, decoder=None):
    label = f"{scheme} k/n={sparsity}"
    if decoder and decoder not in ("none", ""):
        label += f" ({decoder})"
    return label


def collect_series(records, envelope):
    """Per panel (edges value): envelope curves and record traces."""
    panels = sorted({row["edges"] for row in envelope}
                    | {row["edges"] for row in records}, key=int)
    env_series = defaultdict(list)     # (edges, scheme, sparsity) -> points
    for row in envelope:
        key = (row["edges"], row["scheme"], row["sparsity"])
        env_series[key].append((int(row["delay_uses"]),
                                float(row["snr_target_db"])))
    rec_series = defaultdict(lambda: defaultdict(list))
    for row in records:
        key = (row["edges"], row["scheme"], row["sparsity"], row["decoder"])
        rec_series[key][(int(row["L"]), int(row["t"]))].append(
            float(row["snr_db"]))
    return panels, env_series, rec_series


def list_series(env_series, rec_series):
    names = set()
    for edges, scheme, sparsity in env_series:
        names.add(f"{scheme} edges={edges} k/n={sparsity}")
    for edges, scheme, sparsity, decoder in rec_series:
        suffix = f" decoder={decoder}" if decoder not in ("none", "") else ""
        names.add(f"{scheme} edges={edges} k/n={sparsity}{suffix}")
    for name in sorted(names):
        print(name)


def render(panels, env_series, rec_series, out_path):
    fig, axes = plt.subplots(len(panels), 1,
                             figsize=(8.5, 3.6 * len(panels)), squeeze=False)
    # stable color per legend series across panels
    legend_keys = sorted({(s, sp) for (_, s, sp) in env_series}
                         | {(s, sp) for (_, s, sp, _) in rec_series})
    color_of = {key: PALETTE[i % len(PALETTE)]
                for i, key in enumerate(legend_keys)}
    for ax, edges in zip(axes[:, 0], panels):
        for key in sorted(k for k in rec_series if k[0] == edges):
            _, scheme, sparsity, decoder = key
            color = color_of[(scheme, sparsity)]
            by_L = defaultdict(list)
            for (L, t), snrs in sorted(rec_series[key].items()):
                by_L[L].append((t * L, sum(snrs) / len(snrs)))
            for L, pts in sorted(by_L.items()):
                pts.sort()
                ax.plot([x for x, _ in pts], [y for _, y in pts],
                        color=color, alpha=0.25, linewidth=0.8, zorder=1)
        for key in sorted(k for k in env_series if k[0] == edges):
            _, scheme, sparsity = key
            pts = sorted(env_series[key], key=lambda p: p[1])
            ax.plot([x for x, _ in pts], [y for _, y in pts],
                    color=color_of[(scheme, sparsity)], marker="o",
                    markersize=4, linewidth=1.8, zorder=2,
                    label=series_label(scheme, sparsity))
        ax.set_title(f"{edges} edges")
        ax.set_xlabel("delivery delay (channel uses)")
        ax.set_ylabel("SNR (dB)")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--records", required=True)
    parser.add_argument("--envelope", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--list-series", action="store_true",
                        help="print the configured series and exit")
    args = parser.parse_args(argv)

    records = load_csv(args.records, RECORD_COLUMNS)
    envelope = load_csv(args.envelope, ENVELOPE_COLUMNS)
    panels, env_series, rec_series = collect_series(records, envelope)
    if args.list_series:
        list_series(env_series, rec_series)
        return 0
    render(panels, env_series, rec_series, args.out)
    print(f"figure written to {args.out} ({len(panels)} panel(s))")
    return 0


if __name__ == "__main__":
    sys.exit(main())
