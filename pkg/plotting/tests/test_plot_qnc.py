"""Plot-component tests: drive the script exactly as a user would, through
its command line, on synthetic CSVs that follow the published contract."""

import struct
import subprocess
import sys
from pathlib import Path

import pytest

SCRIPT = Path(__file__).resolve().parents[1] / "plot_qnc.py"

RECORDS_HEADER = "scheme,seed,edges,sparsity,L,t,delay_uses,snr_db,decoder"
ENVELOPE_HEADER = "scheme,edges,sparsity,snr_target_db,delay_uses,L"


def run(args):
    return subprocess.run([sys.executable, str(SCRIPT)] + [str(a) for a in args],
                          capture_output=True, text=True)


def write_fixture(tmp_path, edges=(400, 800)):
    rec_lines = [RECORDS_HEADER]
    env_lines = [ENVELOPE_HEADER]
    for e in edges:
        for sp, dec in ((0.05, "mmse"), (0.15, "mmse")):
            for scheme in ("qnc", "forwarding"):
                d = "none" if scheme == "forwarding" else dec
                for t in (1, 2, 4, 8):
                    snr = 3.0 * t + (5 if scheme == "qnc" else 0)
                    rec_lines.append(
                        f"{scheme},1,{e},{sp},4,{t},{4 * t},{snr:.6f},{d}")
                for target in (6.0, 12.0):
                    delay = int(target) * (2 if scheme == "forwarding" else 1)
                    env_lines.append(
                        f"{scheme},{e},{sp},{target:.6f},{delay},4")
    rec = tmp_path / "records.csv"
    env = tmp_path / "envelope.csv"
    rec.write_text("\n".join(rec_lines) + "\n")
    env.write_text("\n".join(env_lines) + "\n")
    return rec, env


def png_payload(path):
    """PNG with text/metadata chunks stripped, for byte comparisons."""
    blob = Path(path).read_bytes()
    assert blob[:8] == b"\x89PNG\r\n\x1a\n"
    out = [blob[:8]]
    pos = 8
    while pos < len(blob):
        length = struct.unpack(">I", blob[pos:pos + 4])[0]
        ctype = blob[pos + 4:pos + 8]
        chunk = blob[pos:pos + 12 + length]
        pos += 12 + length
        if ctype not in (b"tEXt", b"zTXt", b"iTXt", b"tIME"):
            out.append(chunk)
    return b"".join(out)


def test_two_panel_render(tmp_path):
    rec, env = write_fixture(tmp_path)
    fig = tmp_path / "fig.png"
    proc = run(["--records", rec, "--envelope", env, "--out", fig])
    assert proc.returncode == 0, proc.stderr
    assert fig.exists() and fig.stat().st_size > 0
    assert "2 panel(s)" in proc.stdout


def test_single_series_single_panel(tmp_path):
    rec = tmp_path / "records.csv"
    env = tmp_path / "envelope.csv"
    rec.write_text(RECORDS_HEADER + "\n" + "qnc,1,400,0.05,4,1,4,5.0,mmse\n")
    env.write_text(ENVELOPE_HEADER + "\n" + "qnc,400,0.05,5.0,4,4\n")
    fig = tmp_path / "one.png"
    proc = run(["--records", rec, "--envelope", env, "--out", fig])
    assert proc.returncode == 0, proc.stderr
    assert "1 panel(s)" in proc.stdout
    assert fig.exists()


def test_missing_column_fails_loudly(tmp_path):
    rec, env = write_fixture(tmp_path)
    broken = tmp_path / "broken.csv"
    lines = rec.read_text().splitlines()
    broken.write_text("\n".join([lines[0].replace("delay_uses", "delay")]
                                + lines[1:]) + "\n")
    fig = tmp_path / "nope.png"
    proc = run(["--records", broken, "--envelope", env, "--out", fig])
    assert proc.returncode != 0
    assert "delay_uses" in proc.stderr
    assert not fig.exists()


def test_missing_envelope_column(tmp_path):
    rec, env = write_fixture(tmp_path)
    broken = tmp_path / "env_broken.csv"
    lines = env.read_text().splitlines()
    broken.write_text("\n".join([lines[0].replace("snr_target_db", "target")]
                                + lines[1:]) + "\n")
    fig = tmp_path / "nope.png"
    proc = run(["--records", rec, "--envelope", broken, "--out", fig])
    assert proc.returncode != 0
    assert "snr_target_db" in proc.stderr
    assert not fig.exists()


def test_empty_csv_writes_nothing(tmp_path):
    rec, env = write_fixture(tmp_path)
    empty = tmp_path / "empty.csv"
    empty.write_text(RECORDS_HEADER + "\n")
    fig = tmp_path / "nope.png"
    proc = run(["--records", empty, "--envelope", env, "--out", fig])
    assert proc.returncode != 0
    assert not fig.exists()


def test_series_listing(tmp_path):
    rec, env = write_fixture(tmp_path)
    proc = run(["--records", rec, "--envelope", env, "--out",
                tmp_path / "x.png", "--list-series"])
    assert proc.returncode == 0
    for edges in (400, 800):
        for sp in ("0.05", "0.15"):
            assert f"qnc edges={edges} k/n={sp}" in proc.stdout
            assert f"forwarding edges={edges} k/n={sp}" in proc.stdout


def test_deterministic_output(tmp_path):
    rec, env = write_fixture(tmp_path)
    fig1 = tmp_path / "a.png"
    fig2 = tmp_path / "b.png"
    assert run(["--records", rec, "--envelope", env, "--out", fig1]).returncode == 0
    assert run(["--records", rec, "--envelope", env, "--out", fig2]).returncode == 0
    assert png_payload(fig1) == png_payload(fig2)
