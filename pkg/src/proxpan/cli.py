"""Command-line frontend: ``proxpan {synth,solve,train,infer,eval,gradcheck}``.

Runs are configured by an INI file (``--config``) whose sections and keys are
listed in :data:`SCHEMA`; unknown sections or keys are rejected. The common
flags ``--seed``, ``--threads`` and ``--precision`` override the ``[run]``
section. Every command writes its outputs and a ``run.json`` reproducibility
record under ``--out-dir``.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 shape
error, 4 divergence, 5 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DivergenceError, RasterFormatError, ShapeError
from .metrics import evaluate_full, evaluate_reduced, reports_to_csv, reports_to_jsonl
from .model import FusionPair, PriorWeights, reconstruct_hrms
from .network import (
    NetworkConfig,
    init_network,
    load_checkpoint,
    network_forward,
    save_checkpoint,
)
from .raster import export_preview, read_raster, write_raster
from .solver import SolverConfig, solve
from .training import TrainConfig, finite_diff_check, train, write_history_csv
from .wald import (
    DatasetManifest,
    blur_decimate,
    desk_banks,
    exp_upsample,
    split_dataset,
    synth_dataset,
)

logger = logging.getLogger("proxpan")

SCHEMA = {
    "run": {"seed": 0, "threads": 1, "precision": "f32"},
    "data": {
        "count": 64, "height": 64, "width": 64, "bands": 8, "features": 8, "kernel": 3,
        "sparsity": 0.1, "offset": 1.0, "ratio": 4, "protocol": "wald", "split": 0.9,
        "bank_seed": 1,
    },
    "solver": {
        "lam1": 1e-3, "lam2": 1e-3, "lam3": 1e-3, "max_sweeps": 100, "rel_tol": 1e-6,
        "steps": "auto", "power_iters": 20,
    },
    "network": {"features": 8, "kernel": 3, "bands": 8, "prox_kernel": 3, "stages": 2,
                "eta_init": 0.1},
    "train": {"learning_rate": 2e-3, "decay_factor": 0.9, "decay_every": 50, "epochs": 100,
              "batch_size": 64},
    "eval": {"ratio": 4, "block": 32},
    "gradcheck": {"samples": 200, "perturbation": 1e-5, "tolerance": 1e-4},
}

EXIT_CODES = {ConfigError: 2, ShapeError: 3, DivergenceError: 4}


def _coerce(section, key, raw):
    default = SCHEMA[section][key]
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc
    return raw.strip()


def load_config(path=None, overrides=None):
    """Resolve a config: schema defaults, then the file, then ``overrides``."""
    cfg = {sec: dict(keys) for sec, keys in SCHEMA.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for sec in parser.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for key, raw in parser.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{sec}]")
                cfg[sec][key] = _coerce(sec, key, raw)
    for (sec, key), value in (overrides or {}).items():
        if value is not None:
            cfg[sec][key] = value
    if cfg["run"]["precision"] not in ("f32", "f64"):
        raise ConfigError(f"precision must be f32 or f64, got {cfg['run']['precision']!r}")
    if cfg["data"]["protocol"] not in ("wald", "model"):
        raise ConfigError(f"unknown protocol {cfg['data']['protocol']!r}")
    return cfg


def _dtype(cfg):
    return np.float64 if cfg["run"]["precision"] == "f64" else np.float32


def _net_config(cfg):
    n = cfg["network"]
    try:
        return NetworkConfig(count=n["features"], size=n["kernel"], bands=n["bands"],
                             prox_size=n["prox_kernel"], stages=n["stages"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_record(out_dir, command, argv, cfg):
    record = {"command": command, "argv": list(argv), "config": cfg,
              "seed": cfg["run"]["seed"], "version": __version__}
    (out_dir / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg, out_dir):
    d = cfg["data"]
    analysis, synthesis = desk_banks(d["bands"], d["features"], d["kernel"], seed=d["bank_seed"])
    manifest = synth_dataset(
        out_dir / "data", d["count"], (d["height"], d["width"]), analysis, synthesis,
        sparsity=d["sparsity"], seed=cfg["run"]["seed"], ratio=d["ratio"],
        protocol=d["protocol"], offset=d["offset"],
    )
    if len(manifest) >= 2:
        train_m, test_m = split_dataset(manifest, d["split"], seed=cfg["run"]["seed"])
        train_m.write(out_dir / "data" / "train.jsonl")
        test_m.write(out_dir / "data" / "test.jsonl")
    print(f"wrote {len(manifest)} samples to {out_dir / 'data'}")
    return 0


def cmd_solve(args, cfg, out_dir):
    s = cfg["solver"]
    dtype = _dtype(cfg)
    params = load_checkpoint(args.checkpoint, dtype=dtype)
    pair = FusionPair(read_raster(args.pan).astype(dtype), read_raster(args.ms_up).astype(dtype))
    steps = s["steps"]
    if steps != "auto":
        try:
            steps = tuple(float(x) for x in steps.split(","))
        except ValueError as exc:
            raise ConfigError(f"[solver] steps: {steps!r}") from exc
    try:
        solver_cfg = SolverConfig(
            weights=PriorWeights(s["lam1"], s["lam2"], s["lam3"]), steps=steps,
            max_sweeps=s["max_sweeps"], rel_tol=s["rel_tol"], power_iters=s["power_iters"],
            seed=cfg["run"]["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    features, trace = solve(pair, params.analysis, solver_cfg)
    fused = reconstruct_hrms(features, params.synthesis)
    write_raster(fused, out_dir / "fused.mbt")
    with open(out_dir / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "objective"])
        for k, obj in enumerate(trace.objective_per_sweep):
            w.writerow([k, repr(float(obj))])
    print(f"{trace.sweeps_run} sweeps, final objective {trace.objective_per_sweep[-1]:.6g}")
    return 0


def cmd_train(args, cfg, out_dir):
    t = cfg["train"]
    net_cfg = _net_config(cfg)
    params = init_network(net_cfg, seed=cfg["run"]["seed"], dtype=_dtype(cfg),
                          eta=cfg["network"]["eta_init"])
    try:
        train_cfg = TrainConfig(learning_rate=t["learning_rate"], decay_factor=t["decay_factor"],
                                decay_every=t["decay_every"], epochs=t["epochs"],
                                batch_size=t["batch_size"], seed=cfg["run"]["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = train(DatasetManifest.read(args.manifest), params, train_cfg)
    save_checkpoint(result.params, out_dir / "checkpoint.ppn")
    write_history_csv(result.history, out_dir / "history.csv")
    if result.history:
        print(f"final epoch mean loss {result.history[-1][1]:.6g}")
    return 0


def cmd_infer(args, cfg, out_dir):
    dtype = _dtype(cfg)
    params = load_checkpoint(args.checkpoint, dtype=dtype)
    pan = read_raster(args.pan).astype(dtype)
    if args.ms_up is not None:
        ms_up = read_raster(args.ms_up).astype(dtype)
    else:
        ms_up = exp_upsample(read_raster(args.ms), cfg["eval"]["ratio"]).astype(dtype)
    fused, _ = network_forward(FusionPair(pan, ms_up), params)
    write_raster(fused, out_dir / "fused.mbt")
    if fused.shape[-1] >= 3:
        export_preview(fused, (0, 1, 2), out_dir / "fused_preview.ppm")
    print(f"fused image {fused.shape[0]}x{fused.shape[1]}x{fused.shape[2]}")
    return 0


def cmd_eval(args, cfg, out_dir):
    e = cfg["eval"]
    fused = read_raster(args.fused)
    name = Path(args.fused).stem
    if args.reference is not None:
        report = evaluate_reduced(fused, read_raster(args.reference), e["ratio"], e["block"], name)
    elif args.ms is not None and args.pan is not None:
        pan = read_raster(args.pan)
        pan_lr = read_raster(args.pan_lr) if args.pan_lr else blur_decimate(pan, e["ratio"])
        report = evaluate_full(fused, read_raster(args.ms), pan, pan_lr, e["block"], name)
    else:
        raise ConfigError("eval needs --reference, or --ms and --pan")
    (out_dir / "report.csv").write_text(reports_to_csv([report]))
    (out_dir / "report.jsonl").write_text(reports_to_jsonl([report]))
    print(report.to_json())
    return 0


def cmd_gradcheck(args, cfg, out_dir):
    g = cfg["gradcheck"]
    rng = np.random.default_rng(cfg["run"]["seed"])
    net_cfg = NetworkConfig(count=2, size=3, bands=2, prox_size=3, stages=2)
    params = init_network(net_cfg, seed=cfg["run"]["seed"], dtype=np.float64, eta=0.3)
    pair = FusionPair(rng.standard_normal((2, 8, 8, 1)), rng.standard_normal((2, 8, 8, 2)))
    truth = rng.standard_normal((2, 8, 8, 2))
    err = finite_diff_check(params, pair, truth, g["perturbation"], g["samples"],
                            seed=cfg["run"]["seed"])
    ok = err <= g["tolerance"]
    summary = {"max_relative_error": err, "samples": g["samples"],
               "tolerance": g["tolerance"], "passed": ok}
    (out_dir / "gradcheck.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"gradcheck {'PASS' if ok else 'FAIL'}: max relative error {err:.3e}")
    return 0 if ok else 1


COMMANDS = {
    "synth": cmd_synth, "solve": cmd_solve, "train": cmd_train,
    "infer": cmd_infer, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--out-dir", required=True, help="directory receiving all outputs")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--precision", choices=("f32", "f64"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="proxpan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p = sub.add_parser("solve", parents=[common], help="classical proximal-gradient fusion")
    p.add_argument("--pan", required=True)
    p.add_argument("--ms-up", required=True)
    p.add_argument("--checkpoint", required=True, help="PPN1 file supplying the filter banks")
    p = sub.add_parser("train", parents=[common], help="train the unfolded network")
    p.add_argument("--manifest", required=True)
    p = sub.add_parser("infer", parents=[common], help="fuse with a trained network")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pan", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ms", help="native-resolution MS (EXP-upsampled internally)")
    group.add_argument("--ms-up", help="already upsampled MS")
    p = sub.add_parser("eval", parents=[common], help="quality indexes of a fused raster")
    p.add_argument("--fused", required=True)
    p.add_argument("--reference")
    p.add_argument("--ms")
    p.add_argument("--pan")
    p.add_argument("--pan-lr")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {("run", "seed"): args.seed,
                                        ("run", "threads"): args.threads,
                                        ("run", "precision"): args.precision})
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_record(out_dir, args.command, argv, cfg)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cfg["run"]["threads"]):
            return COMMANDS[args.command](args, cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4
    except (OSError, RasterFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
