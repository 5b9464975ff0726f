"""Command-line workflows.

Exit codes: 0 success, 2 validation failure, 3 statistical degeneracy.
Errors are reported as one line on stderr::

    twincal: error code=2 type=ValidationError message="..."
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import store
from .config import ExperimentConfig, dump_config, load_config
from .errors import DegeneracyError, TwinCalError, ValidationError
from .estimators.calibration import eta_from_point, eta_partner, eta_uncertainty, multi_l_calibration
from .estimators.centering import ScanPoint, parabola_fit
from .estimators.correlation import coherence_radius, cross_correlation_map
from .geometry import nested_regions
from .scene import build_lattice
from .simulate import simulate_background, simulate_stack
from .workflows import centering


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
    store._atomic_write(Path(path), [buf.getvalue().encode()])


def emit(summary: dict) -> None:
    for k, v in summary.items():
        print(f"{k}={v if isinstance(v, str) else fmt(v)}")


# --- simulate -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    scene, sensor = cfg.scene(), cfg.sensor()
    lattice = build_lattice(scene, sensor, cfg.lattice_angle)
    base = {f"config.{k}": v for k, v in cfg.to_dict().items()}
    base.update(
        readout_pitch=fmt(sensor.readout_pitch),
        cs_readout_x=fmt(sensor.cs_position[0] / sensor.bin_factor),
        cs_readout_y=fmt(sensor.cs_position[1] / sensor.bin_factor),
        truth_eta_i=fmt(scene.eta_i),
        truth_eta_s=fmt(scene.eta_s),
        truth_r_coh=fmt(scene.r_coh),
        truth_d_x=fmt(scene.d_offset[0]),
        truth_d_y=fmt(scene.d_offset[1]),
        n_modes=len(lattice),
    )
    frames = simulate_stack(scene, sensor, lattice, cfg.n_frames, cfg.seed, workers=cfg.workers)
    store.write_store(frames, args.out)
    store.write_meta(args.out, {**base, "kind": "light", "n_frames": cfg.n_frames})
    print(f"wrote={args.out}")
    if args.bg_out:
        bg = simulate_background(scene, sensor, lattice, cfg.n_bg_frames, cfg.seed, workers=cfg.workers)
        store.write_store(bg, args.bg_out)
        store.write_meta(args.bg_out, {**base, "kind": "dark", "n_frames": cfg.n_bg_frames})
        print(f"wrote={args.bg_out}")
    return 0


def _open(path):
    frames = store.read_store(path)
    try:
        meta = store.read_meta(path)
    except FileNotFoundError:
        meta = {}
    if "readout_pitch" in meta:
        frames.pitch = float(meta["readout_pitch"])
    return frames, meta


def _pair(text, n, name):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != n:
        raise ValidationError(f"{name} needs {n} comma-separated values")
    return parts


# --- coherence ------------------------------------------------------------

def cmd_coherence(args) -> int:
    frames, meta = _open(args.store)
    if args.pitch is not None:
        frames.pitch = args.pitch
    if frames.pitch is None:
        raise ValidationError("pixel pitch unknown: pass --pitch or keep the .meta sidecar")
    if args.cs:
        cs = _pair(args.cs, 2, "--cs")
    elif "cs_readout_x" in meta:
        cs = [float(meta["cs_readout_x"]), float(meta["cs_readout_y"])]
    else:
        cs = None
    if args.region:
        region = [int(v) for v in _pair(args.region, 4, "--region")]
    elif meta.get("config.coh_region"):
        region = [int(v) for v in meta["config.coh_region"].split(",")]
    else:
        h, w = frames.shape
        cx = int(cs[0]) if cs else w // 2
        region = [cx // 4, h // 4, cx // 4 + cx // 2, h // 4 + h // 2]
    srange = args.shift_range if args.shift_range is not None else int(meta.get("config.shift_range", 6))
    cmap = cross_correlation_map(frames, region, srange, cs)
    rows = []
    for a, sy in enumerate(cmap.shifts_y):
        for b, sx in enumerate(cmap.shifts_x):
            rows.append((int(sx), int(sy), sx * cmap.pitch, sy * cmap.pitch, cmap.values[a, b]))
    write_csv(args.out, ["shift_x_px", "shift_y_px", "shift_x_um", "shift_y_um", "c"], rows)
    est = coherence_radius(cmap)
    summary = {
        "r_um": est.r, "u_r_um": est.u_r, "fwhm_x_um": est.fwhm_x, "fwhm_y_um": est.fwhm_y,
        "peak": est.peak, "under_resolved": est.under_resolved,
    }
    if "truth_r_coh" in meta:
        summary["truth_r_coh_um"] = float(meta["truth_r_coh"])
    if args.summary:
        write_csv(args.summary, [f"{k}" for k in summary], [list(summary.values())])
    emit(summary)
    return 0


# --- center ---------------------------------------------------------------

def _read_points(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return [ScanPoint(float(r["d_um"]), float(r["sigma"]), float(r.get("u_sigma") or 0.0)) for r in rows]
    except (KeyError, ValueError) as e:
        raise ValidationError(f"{path}: expected columns d_um,sigma[,u_sigma]: {e}") from e


def cmd_center(args) -> int:
    if args.points:
        fit = parabola_fit(_read_points(args.points))
        emit({"d_min_um": fit.d_min, "u_dmin_um": fit.u_dmin})
        return 0
    if not args.config or not args.out_prefix:
        raise ValidationError("center needs --config and --out-prefix, or --points")
    cfg = load_config(args.config)
    scans = centering(cfg.scene(), cfg.sensor(), step=cfg.scan_step, n_steps=cfg.scan_steps,
                      n_frames=cfg.scan_frames, seed=cfg.seed, passes=cfg.scan_passes,
                      balance=args.balance, workers=cfg.workers)
    header = ["pass", "d_um", "sigma", "u_sigma", "fit_d_min_um", "fit_u_dmin_um"]
    summary = {}
    for axis, name in ((0, "x"), (1, "y")):
        rows = []
        for k, s in enumerate(sc for sc in scans if sc.axis == axis):
            rows += [(k, p.d, p.sigma, p.u_sigma, s.fit.d_min, s.fit.u_dmin) for p in s.points]
            last = s
        write_csv(f"{args.out_prefix}_{name}.csv", header, rows)
        summary[f"d_{name}_um"] = last.fit.d_min
        summary[f"u_d_{name}_um"] = last.fit.u_dmin
    summary["truth_d_x_um"] = cfg.d_x
    summary["truth_d_y_um"] = cfg.d_y
    emit(summary)
    return 0


# --- calibrate ------------------------------------------------------------

def cmd_calibrate(args) -> int:
    if args.alpha is not None or args.sigma is not None or args.A is not None:
        if None in (args.alpha, args.sigma, args.A):
            raise ValidationError("arithmetic mode needs --alpha, --sigma and --A")
        eta = eta_from_point(args.sigma, args.alpha, args.A)
        u = eta_uncertainty(args.sigma, args.u_sigma, args.alpha, args.u_alpha, args.A, args.u_A)
        eta_s, u_s = eta_partner(eta, args.alpha, u, args.u_alpha)
        emit({"eta_i": eta, "u_eta_i": u, "eta_s": eta_s, "u_eta_s": u_s})
        return 0
    if not (args.store and args.config and args.out):
        raise ValidationError("calibrate needs --store, --config and --out (or --alpha/--sigma/--A)")
    cfg: ExperimentConfig = load_config(args.config)
    frames, meta = _open(args.store)
    bg = _open(args.bg_store)[0] if args.bg_store else None
    sensor = cfg.sensor()
    if frames.shape != sensor.readout_shape:
        raise ValidationError(f"store frames {frames.shape} do not match configured read-out grid {sensor.readout_shape}")
    if not cfg.l_list:
        raise ValidationError("config has an empty l_list")
    ny, nx = sensor.readout_shape
    cx = sensor.cs_um[0] / sensor.readout_pitch
    center = (cfg.region_x if cfg.region_x is not None else cx / 2.0,
              cfg.region_y if cfg.region_y is not None else ny / 2.0)
    pairs = nested_regions(sensor, [k * sensor.readout_pitch for k in cfg.l_list], center)
    r = cfg.r_est if cfg.r_est is not None else cfg.r_coh
    res = multi_l_calibration(frames, pairs, r, cfg.d_est, cfg.beta, cfg.mu_bound, bg,
                              n_boot=cfg.n_boot, seed=cfg.boot_seed, u_r=cfg.u_r, u_d=cfg.u_d)
    write_csv(args.out, ["L_um", "A", "alpha", "sigma_alpha_b", "u_sigma", "eta", "u_eta", "out_of_range"],
              [(p.L, p.A, p.alpha, p.sigma_alpha_b, p.u_sigma, p.eta, p.u_eta, p.flagged) for p in res.per_l])
    if args.cov_out:
        n = len(res.per_l)
        write_csv(args.cov_out, ["L_um"] + [f"L{j}" for j in range(n)],
                  [[res.per_l[j].L, *res.cov_matrix[j]] for j in range(n)])
    summary = {"eta_bar": res.eta_bar, "u_eta": res.u_eta, "u_eta_rel": res.u_eta_rel,
               "u_eta_syst": res.u_eta_syst, "n_boot": res.n_boot}
    if res.fit is not None:
        f = res.fit
        summary.update(eta_constrained=f.eta_constrained, u_eta_constrained=f.u_eta_constrained,
                       fit_slope=f.slope, fit_intercept=f.intercept, pearson_r=f.pearson_r,
                       r_uncentered=f.r_uncentered)
    if "truth_eta_i" in meta:
        summary["truth_eta_i"] = float(meta["truth_eta_i"])
    if args.report:
        store._atomic_write(Path(args.report), ["".join(f"{k}={v if isinstance(v, str) else fmt(v)}\n"
                                                         for k, v in summary.items()).encode()])
    emit(summary)
    return 0


def cmd_config(args) -> int:
    sys.stdout.write(dump_config(load_config(args.config)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twincal", description="Twin-beam detector calibration toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize a frame store from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bg-out", help="also write dark frames here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("coherence", help="cross-correlation map and coherence radius")
    s.add_argument("--store", required=True)
    s.add_argument("--out", required=True, help="CSV of c(xi)")
    s.add_argument("--summary", help="CSV with the radius estimate")
    s.add_argument("--region", help="x0,y0,x1,y1 idler pixels")
    s.add_argument("--cs", help="centre of symmetry x,y in stored pixels")
    s.add_argument("--shift-range", type=int)
    s.add_argument("--pitch", type=float, help="stored pixel size in um")
    s.set_defaults(func=cmd_coherence)

    s = sub.add_parser("center", help="centring scan (x then y) with parabolic fits")
    s.add_argument("--config")
    s.add_argument("--out-prefix")
    s.add_argument("--points", help="fit an existing CSV with d_um,sigma,u_sigma columns")
    s.add_argument("--balance", action="store_true", help="use the balanced noise reduction factor")
    s.set_defaults(func=cmd_center)

    s = sub.add_parser("calibrate", help="efficiency from nested region pairs")
    s.add_argument("--store")
    s.add_argument("--bg-store")
    s.add_argument("--config")
    s.add_argument("--out", help="per-size CSV")
    s.add_argument("--cov-out", help="CSV of the covariance matrix")
    s.add_argument("--report", help="key=value summary file")
    s.add_argument("--alpha", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--A", type=float)
    s.add_argument("--u-alpha", type=float, default=0.0)
    s.add_argument("--u-sigma", type=float, default=0.0)
    s.add_argument("--u-A", type=float, default=0.0)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("config", help="validate a config and print it with defaults filled in")
    s.add_argument("config")
    s.set_defaults(func=cmd_config)
    return p


def _fail(code: int, exc: BaseException) -> int:
    msg = str(exc).replace("\n", " ").replace('"', "'")
    print(f'twincal: error code={code} type={type(exc).__name__} message="{msg}"', file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegeneracyError as e:
        return _fail(3, e)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as e:
        return _fail(2, e)
    except TwinCalError as e:
        return _fail(2, e)


if __name__ == "__main__":
    sys.exit(main())
