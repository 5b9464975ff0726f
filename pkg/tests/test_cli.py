from __future__ import annotations

import csv
import subprocess
import sys

import numpy as np
import pytest

from twincal.cli import main
from twincal.store import read_meta, read_store

POINT = """mu=0.01
r_coh=43
eta_i=0.72
eta_s=0.784
width=256
height=128
bin_factor=4
n_frames={frames}
n_bg_frames=500
seed=3
l_list=12,16,20,24,28
region_x=16
region_y=16
mu_bound=0.01
n_boot=200
"""

SPREAD = """mu=4
r_coh=43
eta_i=0.72
eta_s=0.784
width=128
height=64
fidelity=spread
n_frames=1500
seed=4
coh_region=16,16,48,48
shift_range=5
"""


def _summary(out: str) -> dict:
    return dict(line.split("=", 1) for line in out.strip().splitlines())


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_simulate_deterministic(tmp_path):
    cfg = _write(tmp_path, "c.cfg", POINT.format(frames=50))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a.twbf")]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b.twbf")]) == 0
    assert (tmp_path / "a.twbf").read_bytes() == (tmp_path / "b.twbf").read_bytes()
    meta = read_meta(tmp_path / "a.twbf")
    assert meta["truth_eta_i"] == "0.72" and meta["config.seed"] == "3"


def test_simulate_dark_config(tmp_path):
    text = POINT.format(frames=200).replace("mu=0.01", "mu=0") + "read_noise_std=2\nstray_mean=0.5\n"
    cfg = _write(tmp_path, "c.cfg", text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "d.twbf")]) == 0
    v = read_store(tmp_path / "d.twbf").data
    assert abs(v.mean() - 0.5 * 16) < 0.1
    assert abs(v.var() - (8 + 4)) < 0.5


def test_calibrate_arithmetic(capsys):
    assert main(["calibrate", "--alpha", "0.91867", "--sigma", "0.253", "--A", "0.9756"]) == 0
    s = _summary(capsys.readouterr().out)
    assert float(s["eta_i"]) == pytest.approx(0.724, abs=1e-3)
    assert float(s["eta_s"]) == pytest.approx(0.788, abs=1e-3)


def test_calibrate_simulated(tmp_path, capsys):
    cfg = _write(tmp_path, "c.cfg", POINT.format(frames=2500))
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "s.twbf"), "--bg-out", str(tmp_path / "b.twbf")])
    capsys.readouterr()
    args = ["calibrate", "--store", str(tmp_path / "s.twbf"), "--bg-store", str(tmp_path / "b.twbf"),
            "--config", cfg, "--out", str(tmp_path / "cal.csv"), "--cov-out", str(tmp_path / "cov.csv")]
    assert main(args) == 0
    s = _summary(capsys.readouterr().out)
    first = (tmp_path / "cal.csv").read_bytes()
    assert abs(float(s["eta_bar"]) - float(s["truth_eta_i"])) < 3 * float(s["u_eta"])
    comb = np.hypot(float(s["u_eta"]), float(s["u_eta_constrained"]))
    assert abs(float(s["eta_bar"]) - float(s["eta_constrained"])) < comb
    rows = list(csv.reader(open(tmp_path / "cal.csv")))
    assert rows[0][0] == "L_um" and len(rows) == 6
    assert main(args) == 0
    assert (tmp_path / "cal.csv").read_bytes() == first


def test_coherence_spread_and_point(tmp_path, capsys):
    cfg = _write(tmp_path, "s.cfg", SPREAD)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "s.twbf")])
    capsys.readouterr()
    assert main(["coherence", "--store", str(tmp_path / "s.twbf"), "--out", str(tmp_path / "c.csv")]) == 0
    s = _summary(capsys.readouterr().out)
    assert abs(float(s["r_um"]) - 43.0) < 4.3 and s["under_resolved"] == "0"
    header = open(tmp_path / "c.csv").readline().strip()
    assert header == "shift_x_px,shift_y_px,shift_x_um,shift_y_um,c"

    pcfg = _write(tmp_path, "p.cfg", POINT.format(frames=1500).replace("mu=0.01", "mu=2") + "coh_region=6,8,26,24\nshift_range=3\n")
    main(["simulate", "--config", pcfg, "--out", str(tmp_path / "p.twbf")])
    capsys.readouterr()
    assert main(["coherence", "--store", str(tmp_path / "p.twbf"), "--out", str(tmp_path / "pc.csv")]) == 0
    assert _summary(capsys.readouterr().out)["under_resolved"] == "1"


def test_center_points_non_convex(tmp_path, capsys):
    p = tmp_path / "scan.csv"
    p.write_text("d_um,sigma,u_sigma\n0,0.9,0.01\n10,0.8,0.01\n20,0.7,0.01\n30,0.6,0.01\n")
    assert main(["center", "--points", str(p)]) == 3
    err = capsys.readouterr().err.strip()
    assert err.startswith("twincal: error code=3 type=DegeneracyError message=")
    assert "\n" not in err


@pytest.mark.slow
def test_center_simulated(tmp_path, capsys):
    text = SPREAD.replace("mu=4", "mu=0.5").replace("width=128", "width=240").replace("height=64", "height=144")
    text += "bin_factor=24\nd_x=30\nd_y=-20\nscan_passes=3\n"
    cfg = _write(tmp_path, "c.cfg", text)
    assert main(["center", "--config", cfg, "--out-prefix", str(tmp_path / "scan")]) == 0
    s = _summary(capsys.readouterr().out)
    assert abs(float(s["d_x_um"]) - 30) < 3 * float(s["u_d_x_um"])
    assert abs(float(s["d_y_um"]) + 20) < 3 * float(s["u_d_y_um"])
    for axis in "xy":
        rows = list(csv.DictReader(open(tmp_path / f"scan_{axis}.csv")))
        assert {"d_um", "sigma", "u_sigma", "fit_d_min_um", "fit_u_dmin_um"} <= set(rows[0])


def test_validation_exit_code(tmp_path):
    cfg = _write(tmp_path, "bad.cfg", POINT.format(frames=10) + "colour=red\n")
    r = subprocess.run([sys.executable, "-m", "twincal.cli", "simulate", "--config", cfg, "--out",
                        str(tmp_path / "x.twbf")], capture_output=True, text=True)
    assert r.returncode == 2
    assert r.stderr.count("\n") == 1 and "unknown key" in r.stderr
