"""Command-line entry point.

Each command reads one JSON config (paths inside it are relative to the config
file) and writes its outputs plus a ``run.json`` manifest into the output
directory: ``--out``, else ``$FRACTURE_OUT/<command>``, else ``./out/<command>``.

Exit codes: 0 ok, 1 malformed config or input file, 2 missing input, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .grid import shape_mesh
from .harness.datagen import SceneConfig, generate_dataset
from .harness.runtime import build_scene, fracture_pipeline, runtime_step
from .impulse import DEFAULT_I_MAX, ImpulseRaw, normalize_impulse
from .nn.models import ModelConfig
from .reconstruct import SourceState, write_body_manifest
from .segmentation import WatershedConfig, region_report
from .training import Dataset, FractureModel, NumericalError, TrainConfig, predict, train

log = logging.getLogger("voxfrac")

EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 1, 2, 3


class CliError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _git_describe():
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True, text=True,
                           cwd=Path(__file__).resolve().parent, timeout=10)
        return r.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _load_config(path):
    if path is None:
        return {}, Path.cwd()
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_MISSING, f"config not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: malformed JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError(EXIT_CONFIG, f"{path}: top level must be an object")
    return cfg, path.parent


def _input(base, value, what):
    if value is None:
        raise CliError(EXIT_CONFIG, f"config is missing '{what}'")
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise CliError(EXIT_MISSING, f"{what} not found: {p}")
    return p


def _out_dir(args):
    if args.out:
        return Path(args.out)
    root = os.environ.get("FRACTURE_OUT")
    return Path(root or "out") / args.command


def _section(cfg, key, cls):
    try:
        return cls.from_json(cfg.get(key, {}))
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad '{key}' section: {exc}") from None


def _impulse(cfg, base):
    rec = cfg.get("impulse")
    if isinstance(rec, str):
        p = _input(base, rec, "impulse")
        try:
            rec = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"{p}: malformed JSON: {exc}") from None
    if rec is None:
        raise CliError(EXIT_CONFIG, "config is missing 'impulse'")
    try:
        return ImpulseRaw.from_json(rec)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


def _load_model(path):
    try:
        return FractureModel.load(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING, f"checkpoint incomplete: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_CONFIG, f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# commands; each returns (outputs, stage timings)


def cmd_gen_data(args, cfg, base, out):
    scene = dict(cfg.get("scene", {}))
    if args.seed is not None:
        scene["seed"] = args.seed
    if args.resolution is not None:
        scene["resolution"] = args.resolution
    if args.dz is not None:
        scene["dz"] = args.dz
    sc = _section({"scene": scene}, "scene", SceneConfig)
    n = cfg.get("samples", 64)
    if not isinstance(n, int) or n < 1:
        raise CliError(EXIT_CONFIG, "'samples' must be a positive integer")
    try:
        target = shape_mesh(sc.target)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    t = time.perf_counter()
    ds = generate_dataset(target, n, sc)
    dt = time.perf_counter() - t
    out.mkdir(parents=True, exist_ok=True)
    path = ds.save(out)
    outputs = [path.name] + [f"fields/pair_{i:04d}.gsf" for i in range(len(ds))]
    return outputs, {"datagen": dt}


def cmd_train(args, cfg, base, out):
    manifest = _input(base, cfg.get("dataset"), "dataset")
    tc = dict(cfg.get("train", {}))
    if args.seed is not None:
        tc["seed"] = args.seed
    tcfg = _section({"train": tc}, "train", TrainConfig)
    try:
        ds = Dataset.load(manifest)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING, f"dataset incomplete: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_CONFIG, f"{manifest}: {exc}") from None
    r = ds.meta.resolution
    if args.resolution is not None and args.resolution != r:
        raise CliError(EXIT_CONFIG, f"--resolution {args.resolution} but the dataset is at R={r}")
    if args.dz is not None and args.dz != ds.dz:
        raise CliError(EXIT_CONFIG, f"--dz {args.dz} but the dataset codes have {ds.dz} entries")
    mc = {"resolution": r, "dz": ds.dz, **cfg.get("model", {})}
    if args.stages is not None:
        mc["stages"] = args.stages
    mc.setdefault("stages", None)
    try:
        if mc["stages"] is None:
            mc.pop("stages")
            mcfg = ModelConfig.for_resolution(**mc)
        else:
            mcfg = ModelConfig.from_json(mc)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad 'model' section: {exc}") from None
    t = time.perf_counter()
    train(ds, tcfg, mcfg, out_dir=out)
    return ["model.gck", "model.config.json", "metrics.csv"], {"train": time.perf_counter() - t}


def cmd_predict(args, cfg, base, out):
    ckpt = _input(base, cfg.get("checkpoint"), "checkpoint")
    imp = _impulse(cfg, base)
    model = _load_model(ckpt)
    seed = cfg.get("seed", 0) if args.seed is None else args.seed
    t = time.perf_counter()
    f = predict(model, normalize_impulse(imp, cfg.get("i_max", DEFAULT_I_MAX)), seed=seed)
    dt = time.perf_counter() - t
    if not np.isfinite(f.values).all():
        raise NumericalError("prediction contains non-finite values")
    out.mkdir(parents=True, exist_ok=True)
    io.write_gsf(out / "field.gsf", f.values, io.KIND_SCALAR, cfg.get("target", ""))
    return ["field.gsf", "field.meta.json"], {"pred": dt}


def _write_fracture(res, out, target="", skip_bodies=False):
    out.mkdir(parents=True, exist_ok=True)
    io.write_gsf(out / "field.gsf", res.prediction.values, io.KIND_SCALAR, target)
    io.write_gsf(out / "labels.gsf", res.labels.labels, io.KIND_LABELS, target)
    region_report(res.labels, out / "regions.csv")
    names = ["field.gsf", "field.meta.json", "labels.gsf", "labels.meta.json", "regions.csv"]
    if res.bodies and not skip_bodies:
        write_body_manifest(res.bodies, out)
        names += [f"fragment_{i:03d}.obj" for i in range(len(res.bodies))] + ["bodies.json"]
    return names


def cmd_fracture(args, cfg, base, out):
    ckpt = _input(base, cfg.get("checkpoint"), "checkpoint")
    imp = _impulse(cfg, base)
    model = _load_model(ckpt)
    seed = cfg.get("seed", 0) if args.seed is None else args.seed
    try:
        src = SourceState(float(cfg.get("mass", 1.0)), tuple(cfg.get("velocity", (0.0, 0.0, 0.0))))
        ws = WatershedConfig(**cfg.get("watershed", {}))
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    res = fracture_pipeline(model, imp, cfg.get("i_max", DEFAULT_I_MAX), src, seed, ws=ws)
    names = _write_fracture(res, out, cfg.get("target", ""))
    if not res.bodies:
        log.warning("prediction produced no fragments")
    return names, dict(res.timings)


def cmd_run(args, cfg, base, out):
    ckpt = _input(base, cfg.get("checkpoint"), "checkpoint")
    scene = dict(cfg.get("scene", {}))
    sc = _section({"scene": scene}, "scene", SceneConfig)
    seed = sc.seed if args.seed is None else args.seed
    model = _load_model(ckpt)
    if model.cfg.resolution != sc.resolution and "resolution" in scene:
        raise CliError(EXIT_CONFIG, f"scene resolution {sc.resolution} but checkpoint is at "
                                    f"R={model.cfg.resolution}")
    try:
        target = shape_mesh(sc.target)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    world = build_scene(target, sc, seed)
    out.mkdir(parents=True, exist_ok=True)
    stages = {"pred": 0.0, "recon": 0.0}
    names = ["run_log.jsonl"]
    logf = out / "run_log.jsonl"
    tmp = logf.with_name(logf.name + ".tmp")
    with open(tmp, "w") as fh:
        for _ in range(sc.frames):
            ev = runtime_step(world, model, sc, seed)
            fh.write(json.dumps(ev.record(), sort_keys=True) + "\n")
            for k in stages:
                stages[k] += ev.timings.get(k, 0.0)
            if ev.event == "fracture":
                d = ev.detail
                sub = f"fracture_{ev.frame:04d}_{d['body']}"
                res = ev.results[-1]
                names += [f"{sub}/{n}" for n in _write_fracture(res, out / sub, sc.target, skip_bodies=True)]
                entries = []
                for j, bid in enumerate(d["ids"]):
                    b = world.bodies[bid]
                    name = f"fragment_{j:03d}.obj"
                    # meshes are exported in world space at the moment of fracture
                    io.write_obj(b.mesh.transformed(1.0, b.position), out / sub / name)
                    entries.append({"mesh": name, "mass": b.mass, "velocity": [float(x) for x in b.velocity],
                                    "id": b.id})
                io.atomic_write_text(out / sub / "bodies.json", io.dump_json(entries))
                names += [f"{sub}/{e['mesh']}" for e in entries] + [f"{sub}/bodies.json"]
    tmp.replace(logf)
    final = [world.bodies[k].summary() for k in sorted(world.bodies)]
    io.atomic_write_text(out / "world.json", io.dump_json({"frame": world.frame, "bodies": final}))
    names.append("world.json")
    return names, stages


def cmd_inspect(args):
    path = Path(args.path)
    if not path.is_file():
        raise CliError(EXIT_MISSING, f"no such file: {path}")
    try:
        kind, r, arr = io.read_gsf(path)
    except io.FormatError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    names = {io.KIND_SCALAR: "scalar", io.KIND_LABELS: "labels", io.KIND_OCCUPANCY: "occupancy"}
    a = arr.astype(np.float64)
    print(f"kind: {kind} ({names[kind]})")
    print(f"resolution: {r}")
    print(f"min: {a.min():.6g}")
    print(f"max: {a.max():.6g}")
    print(f"sign histogram: negative {int((a < 0).sum())}, zero {int((a == 0).sum())}, "
          f"positive {int((a > 0).sum())}")
    if kind == io.KIND_LABELS:
        print(f"regions: {len(np.unique(arr[arr > 0]))}")
    side = io.read_sidecar(path)
    if side is not None:
        print(f"target: {side.get('target', '')}")
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "predict": cmd_predict,
            "fracture": cmd_fracture, "run": cmd_run}


def build_parser():
    ap = argparse.ArgumentParser(prog="voxfrac", description="Impulse-conditioned voxel fracture pipeline.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="override the seed in the config")
        p.add_argument("--out", help="output directory (default $FRACTURE_OUT/<command> or out/<command>)")
        p.add_argument("--resolution", type=int, help="grid resolution R (4 * 2**k)")
        p.add_argument("--dz", type=int, choices=[4, 8, 32], help="normal-code length")
        p.add_argument("--stages", type=int, choices=[3, 5], help="generator upsampling stages")

    helps = {
        "gen-data": "fire balls at a target and build a training set",
        "train": "fit a model to a dataset manifest",
        "predict": "predict a distance field for one impulse",
        "fracture": "predict, segment and mesh the fragments for one impulse",
        "run": "simulate a scene end to end",
    }
    for name, h in helps.items():
        common(sub.add_parser(name, help=h, description=h))
    pi = sub.add_parser("inspect", help="summarize a GSF1 voxel file")
    pi.add_argument("path")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "inspect":
            return cmd_inspect(args)
        cfg, base = _load_config(args.config)
        out = _out_dir(args)
        t0 = time.perf_counter()
        outputs, stages = COMMANDS[args.command](args, cfg, base, out)
        total = time.perf_counter() - t0
        timings = {k: float(v) for k, v in stages.items()}
        timings["others"] = max(total - sum(timings.values()), 0.0)
        timings["total"] = total
        manifest = {
            "command": args.command,
            "config": str(args.config) if args.config else None,
            "seed": args.seed,
            "git": _git_describe(),
            "outputs": sorted(outputs),
            "timings": timings,
        }
        out.mkdir(parents=True, exist_ok=True)
        io.atomic_write_text(out / "run.json", io.dump_json(manifest))
        return 0
    except CliError as exc:
        print(f"voxfrac: {exc}", file=sys.stderr)
        return exc.code
    except NumericalError as exc:
        print(f"voxfrac: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except io.FormatError as exc:
        print(f"voxfrac: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
