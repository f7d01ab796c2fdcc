"""Command-line pipeline: ``dict build``, ``simulate``, ``reconstruct``, ``evaluate`` and ``sweep``.

Every subcommand reads one YAML experiment file (``--config``; defaults are
used for anything left out) and accepts ``--override key.path=value``.  The
complete configuration is validated before anything is written.  Outputs go
to ``output.directory``; a relative directory is resolved against the
``MSLLR_OUTPUT_ROOT`` environment variable when it is set.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure (solver divergence).
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import itertools
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import fileio
from .acquisition import (AcquisitionOperator, Trajectory, add_noise, make_coil_maps, make_pseudo_radial_masks,
                          make_vds_spiral, measurement_snr_db, sigma_for_snr, voronoi_density_weights)
from .dictionary import build_default_grid, build_dictionary
from .metrics import evaluate
from .phantom import ParameterMaps, generate_phantom, synthesize_mrf_data
from .sequence import generate_fisp_schedule, load_schedule, save_schedule
from .solver import DivergenceError, SolverConfig, reconstruct, zero_filled

log = logging.getLogger("msllr")

OUTPUT_ROOT_ENV = "MSLLR_OUTPUT_ROOT"
METHODS = ("ms-llr", "llr", "zero-filled")
TRAJECTORIES = ("pseudo-radial", "vds-spiral", "cartesian-full")
WINDOWS = {"t1": 5000.0, "t2": 2000.0, "pd": 1.0}

DEFAULTS = {
    "sequence": {"L": 400, "seed": 0, "schedule_file": None, "inversion_delay": 40.0, "k_max": None},
    "phantom": {"nx": 64, "ny": 64, "seed": 0},
    "trajectory": {"kind": "pseudo-radial", "spokes": 7, "samples_per_frame": 876, "inner_region": 20.0,
                   "fov_param": 24.0, "seed": 0, "density_compensation": False},
    "coils": {"count": 1},
    "noise": {"sigma": 0.0, "snr_db": None, "seed": 0},
    "solver": {f.name: f.default for f in dataclasses.fields(SolverConfig)},
    "evaluate": {"methods": list(METHODS), "foreground": False},
    "output": {"directory": "msllr_run", "formats": ["png"]},
}


class ConfigError(ValueError):
    pass


class InputError(OSError):
    pass


# ---------------------------------------------------------------- config


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def parse_override(text: str) -> dict:
    """``"a.b=3"`` -> ``{"a": {"b": 3}}`` with the value parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{text}': {exc}") from exc
    out = value
    for part in reversed(key.strip().split(".")):
        if not part:
            raise ConfigError(f"override '{text}' has an empty key component")
        out = {part: out}
    return out


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def validate(cfg: dict) -> None:
    """Check every field; raise ``ConfigError`` naming the offending path."""
    s = cfg["sequence"]
    _require(_is_int(s["L"]) and s["L"] >= 1, "sequence.L must be a positive integer")
    _require(_is_int(s["seed"]), "sequence.seed must be an integer")
    _require(s["inversion_delay"] is None or s["inversion_delay"] >= 0, "sequence.inversion_delay must be >= 0")
    _require(s["k_max"] is None or (_is_int(s["k_max"]) and s["k_max"] >= 0), "sequence.k_max must be >= 0")
    p = cfg["phantom"]
    for k in ("nx", "ny"):
        _require(_is_int(p[k]) and p[k] >= 16, f"phantom.{k} must be an integer >= 16")
    t = cfg["trajectory"]
    _require(t["kind"] in TRAJECTORIES, f"trajectory.kind must be one of {TRAJECTORIES}")
    _require(_is_int(t["spokes"]) and t["spokes"] >= 1, "trajectory.spokes must be a positive integer")
    _require(_is_int(t["samples_per_frame"]) and t["samples_per_frame"] >= 1,
             "trajectory.samples_per_frame must be a positive integer")
    _require(t["inner_region"] > 0 and t["fov_param"] > 0, "trajectory.inner_region and fov_param must be positive")
    _require(_is_int(cfg["coils"]["count"]) and cfg["coils"]["count"] >= 1, "coils.count must be >= 1")
    n = cfg["noise"]
    _require(isinstance(n["sigma"], (int, float)) and n["sigma"] >= 0, "noise.sigma must be >= 0")
    _require(n["snr_db"] is None or isinstance(n["snr_db"], (int, float)), "noise.snr_db must be a number")
    try:
        solver_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc
    methods = cfg["evaluate"]["methods"]
    _require(isinstance(methods, list) and all(m in METHODS for m in methods),
             f"evaluate.methods must be a list drawn from {METHODS}")
    fmts = cfg["output"]["formats"]
    _require(isinstance(fmts, list) and all(f in ("png",) for f in fmts), "output.formats may only contain 'png'")
    _require(isinstance(cfg["output"]["directory"], str) and cfg["output"]["directory"],
             "output.directory must be a non-empty string")


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, doc)
    for ov in overrides:
        cfg = _merge(cfg, parse_override(ov))
    validate(cfg)
    return cfg


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg["solver"])


def output_dir(cfg: dict) -> Path:
    d = Path(cfg["output"]["directory"])
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not d.is_absolute():
        d = Path(root) / d
    return d


# ---------------------------------------------------------------- pipeline pieces


def make_sequence(cfg: dict):
    s = cfg["sequence"]
    if s["schedule_file"]:
        try:
            seq = load_schedule(s["schedule_file"], s["inversion_delay"])
        except OSError as exc:
            raise InputError(f"cannot read schedule {s['schedule_file']}: {exc}") from exc
        except ValueError as exc:
            raise InputError(f"bad schedule file: {exc}") from exc
        if seq.length != s["L"]:
            raise ConfigError(f"schedule file has {seq.length} frames, sequence.L is {s['L']}")
        return seq
    return generate_fisp_schedule(s["L"], seed=s["seed"], inversion_delay=s["inversion_delay"])


def make_trajectory(cfg: dict) -> Trajectory:
    t, p, L = cfg["trajectory"], cfg["phantom"], cfg["sequence"]["L"]
    if t["kind"] == "pseudo-radial":
        return make_pseudo_radial_masks(p["nx"], p["ny"], L, t["spokes"], seed=t["seed"])
    if t["kind"] == "cartesian-full":
        return Trajectory((p["nx"], p["ny"]), masks=np.ones((p["nx"], p["ny"], L), bool))
    traj = make_vds_spiral(p["nx"], p["ny"], L, t["samples_per_frame"], t["inner_region"], t["fov_param"])
    if t["density_compensation"]:
        traj = traj.with_density_weights(voronoi_density_weights(traj))
    return traj


def make_coils(cfg: dict):
    n = cfg["coils"]["count"]
    return None if n == 1 else make_coil_maps(n, cfg["phantom"]["nx"], cfg["phantom"]["ny"])


def _need(paths):
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise InputError("missing input files (run the earlier pipeline steps first): " + ", ".join(missing))


def _write_maps(path, maps: ParameterMaps, **meta):
    fileio.write_array(path, maps.stack(), channels="t1_ms,t2_ms,pd", **meta)


def _read_maps(path) -> ParameterMaps:
    s = fileio.read_array(path)
    return ParameterMaps(s[..., 0], s[..., 1], s[..., 2])


def _mkdir(path: Path):
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {path}: {exc}") from exc


# ---------------------------------------------------------------- subcommands


def cmd_dict_build(cfg: dict) -> Path:
    out = output_dir(cfg) / "dictionary"
    _mkdir(out)
    seq = make_sequence(cfg)
    t0 = time.perf_counter()
    d = build_dictionary(build_default_grid(), seq, cfg["sequence"]["k_max"])
    elapsed = time.perf_counter() - t0
    fileio.write_dictionary(out, d)
    save_schedule(seq, out / "schedule.csv")
    print(f"dictionary: M={d.size} L={d.length} built in {elapsed:.2f} s -> {out}")
    return out


def _load_dictionary(cfg: dict):
    ddir = output_dir(cfg) / "dictionary"
    _need([ddir / "atoms.bin", ddir / "atoms.json", ddir / "lut.csv"])
    d = fileio.read_dictionary(ddir)
    if d.length != cfg["sequence"]["L"]:
        raise ConfigError(f"dictionary in {ddir} has L={d.length}, config asks for {cfg['sequence']['L']}; "
                          "rerun 'dict build'")
    return d


def cmd_simulate(cfg: dict) -> Path:
    out = output_dir(cfg) / "simulate"
    _mkdir(out)
    seq = make_sequence(cfg)
    p = cfg["phantom"]
    maps = generate_phantom(p["nx"], p["ny"], seed=p["seed"])
    x = synthesize_mrf_data(maps, seq, cfg["sequence"]["k_max"])
    traj = make_trajectory(cfg)
    coils = make_coils(cfg)
    op = AcquisitionOperator(traj, coils)
    b = op.forward(x)
    support = traj.support()[None]
    sigma = cfg["noise"]["sigma"]
    if cfg["noise"]["snr_db"] is not None:
        sigma = sigma_for_snr(b, cfg["noise"]["snr_db"], support)
    noisy = add_noise(b, sigma, seed=cfg["noise"]["seed"], support=support)

    save_schedule(seq, out / "schedule.csv")
    fileio.write_tissue_table(out / "tissues.csv")
    _write_maps(out / "maps", maps)
    fileio.write_array(out / "x_true", x)
    if traj.kind == "cartesian":
        fileio.write_array(out / "mask", traj.masks)
    else:
        fileio.write_trajectory_csv(out / "trajectory.csv", traj.coords)
        if traj.density_weights is not None:
            fileio.write_array(out / "density_weights", traj.density_weights)
    if coils is not None:
        fileio.write_array(out / "coils", coils)
    fileio.write_array(out / "b_clean", b)
    snr_meas = measurement_snr_db(b, noisy, support)
    fileio.write_array(out / "b", noisy, noise_sigma=float(sigma),
                       measurement_snr_db=None if np.isinf(snr_meas) else float(snr_meas))
    print(f"simulate: {p['nx']}x{p['ny']} L={seq.length} {traj.kind} "
          f"undersampling={traj.undersampling_ratio:.4f} sigma={sigma:.4g} -> {out}")
    return out


def _load_acquisition(cfg: dict):
    sim = output_dir(cfg) / "simulate"
    _need([sim / "b.bin", sim / "b.json"])
    t = cfg["trajectory"]
    p = cfg["phantom"]
    if t["kind"] == "vds-spiral":
        _need([sim / "trajectory.csv"])
        coords = fileio.read_trajectory_csv(sim / "trajectory.csv")
        w = fileio.read_array(sim / "density_weights") if (sim / "density_weights.bin").exists() else None
        traj = Trajectory((p["nx"], p["ny"]), coords=coords, density_weights=w)
    else:
        _need([sim / "mask.bin"])
        traj = Trajectory((p["nx"], p["ny"]), masks=fileio.read_array(sim / "mask"))
    coils = fileio.read_array(sim / "coils") if (sim / "coils.bin").exists() else None
    return AcquisitionOperator(traj, coils), fileio.read_array(sim / "b")


def cmd_reconstruct(cfg: dict, method: str) -> Path:
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    d = _load_dictionary(cfg)
    op, b = _load_acquisition(cfg)
    if b.shape != op.measurement_shape:
        raise ConfigError(f"measurements {b.shape} do not match the configured acquisition {op.measurement_shape}")
    scfg = solver_config(cfg)
    if method == "llr":
        scfg = dataclasses.replace(scfg, lambda1_0=0.0)
    out = output_dir(cfg) / "recon" / method
    _mkdir(out)
    t0 = time.perf_counter()
    if method == "zero-filled":
        x, maps = zero_filled(b, op, d, scfg.density_compensated_init, scfg.background_threshold)
        diagnostics = []
        status = "no iterations"
    else:
        rec = reconstruct(b, op, d, scfg)
        x, maps, diagnostics = rec.x, rec.maps, rec.diagnostics
        status = f"{rec.iterations} iterations, {'converged' if rec.converged else 'stopped at n_max'}"
    fileio.write_array(out / "x", x, method=method)
    _write_maps(out / "maps", maps, method=method)
    fileio.write_diagnostics(out / "diagnostics.csv", diagnostics)
    print(f"reconstruct[{method}]: {status} in {time.perf_counter() - t0:.1f} s -> {out}")
    return out


def _png(path: Path, image, vmax: float):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.imsave(path, np.asarray(image, float), vmin=0.0, vmax=vmax, cmap="viridis", format="png",
               metadata={"Software": None})


def cmd_evaluate(cfg: dict, methods=None) -> Path:
    methods = list(methods or cfg["evaluate"]["methods"])
    sim = output_dir(cfg) / "simulate"
    _need([sim / "x_true.bin", sim / "maps.bin"])
    x_true = fileio.read_array(sim / "x_true")
    truth = _read_maps(sim / "maps")
    noise_sigma = fileio.read_header(sim / "b").get("noise_sigma", 0.0)
    out = output_dir(cfg) / "evaluate"
    _mkdir(out)
    rows = []
    for m in methods:
        rdir = output_dir(cfg) / "recon" / m
        _need([rdir / "x.bin", rdir / "maps.bin"])
        x = fileio.read_array(rdir / "x")
        maps = _read_maps(rdir / "maps")
        if x.shape != x_true.shape or maps.shape != truth.shape:
            raise ConfigError(f"reconstruction {rdir} does not match the ground-truth shape")
        meta = {"method": m, "L": cfg["sequence"]["L"], "trajectory": cfg["trajectory"]["kind"],
                "noise_sigma": noise_sigma}
        report = evaluate(x_true, x, truth, maps, meta, foreground=cfg["evaluate"]["foreground"])
        rows.extend(report.rows())
        if "png" in cfg["output"]["formats"]:
            for name, window in WINDOWS.items():
                _png(out / f"{m}_{name}.png", getattr(maps, name), window)
                err = np.abs(getattr(maps, name) - getattr(truth, name))
                _png(out / f"{m}_{name}_error.png", err, 0.1 * window)
    fileio.write_report(out / "report.csv", rows)
    for r in rows:
        print(f"{r['method']:>12} {r['metric']:>10} {r['value']:.6g}")
    return out


def run_pipeline(cfg: dict, methods=None) -> Path:
    cmd_dict_build(cfg)
    cmd_simulate(cfg)
    for m in methods or cfg["evaluate"]["methods"]:
        cmd_reconstruct(cfg, m)
    return cmd_evaluate(cfg, methods)


def cmd_sweep(cfg_path, overrides, grid) -> Path:
    """Run the full pipeline for every combination of ``grid`` (``key=v1,v2,...`` strings)."""
    axes = []
    for item in grid:
        if "=" not in item:
            raise ConfigError(f"sweep axis '{item}' is not of the form key=v1,v2,...")
        key, values = item.split("=", 1)
        axes.append([f"{key}={v}" for v in values.split(",")])
    base = load_config(cfg_path, overrides)
    combos = [list(c) for c in itertools.product(*axes)] if axes else [[]]
    # validate everything before any run touches the filesystem
    configs = []
    for combo in combos:
        cfg = load_config(cfg_path, list(overrides) + combo)
        tag = "_".join(c.replace("=", "-").replace(".", "-") for c in combo) or "base"
        cfg["output"]["directory"] = str(Path(base["output"]["directory"]) / tag)
        configs.append((combo, cfg))
    summary = []
    for combo, cfg in configs:
        report = run_pipeline(cfg) / "report.csv"
        for row in fileio.read_report(report):
            summary.append({"run": " ".join(combo), **row})
    path = output_dir(base) / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["run", *fileio.REPORT_COLUMNS], lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    print(f"sweep: {len(configs)} runs -> {path}")
    return path


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msllr", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    d = sub.add_parser("dict", help="dictionary commands")
    dsub = d.add_subparsers(dest="action", required=True)
    common(dsub.add_parser("build", help="simulate and store the fingerprint dictionary"))
    common(sub.add_parser("simulate", help="phantom, ground-truth data and measurements"))
    r = sub.add_parser("reconstruct", help="run one reconstruction method")
    common(r)
    r.add_argument("--method", choices=METHODS, default="ms-llr")
    e = sub.add_parser("evaluate", help="NMSE/SNR report and PNG maps")
    common(e)
    e.add_argument("--methods", nargs="+", choices=METHODS)
    s = sub.add_parser("sweep", help="full pipeline over a cartesian product of overrides")
    common(s)
    s.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sweep":
            cmd_sweep(args.config, args.override, args.grid)
            return 0
        cfg = load_config(args.config, args.override)
        if args.command == "dict":
            cmd_dict_build(cfg)
        elif args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, args.method)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.methods)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InputError, fileio.FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
