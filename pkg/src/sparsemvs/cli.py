"""Command-line entry point: scene generation, reconstruction, evaluation, benchmarks.

Every failure ends with one line on stderr of the form
``sparsemvs-error: <ErrorClass>: <message>`` and exit status 2.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (
    evaluate,
    f_score,
    mean_baseline_angle,
    sparsity_sample,
    speedup_ratio,
)
from .io import read_cameras, read_ply, read_ppm, write_cameras, write_ply, write_ppm
from .multiscale import BoundingBox
from .pipeline import PipelineConfig, reconstruct, relative_resolution
from .scenegen import PRESETS, ground_truth_cloud, preset_config, render, scene_from_dict

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("sparsemvs")

EXIT_ERROR = 2

PREDICTOR_FIELDS = {"predictor_name": "name", "window_radius": "window_radius",
                    "sigma_color": "sigma_color"}


# ------------------------------------------------------------------- config


def _kebab(name: str) -> str:
    return name.replace("_", "-")


def _snake(name: str) -> str:
    return name.replace("-", "_")


def config_from_dict(d: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    """Apply a parsed config mapping (snake or kebab keys) on top of ``base``."""
    base = base or PipelineConfig()
    top, pred = {}, {}
    fields = {f.name for f in dataclasses.fields(PipelineConfig)} - {"predictor"}
    for key, value in d.items():
        key = _snake(key)
        if key == "predictor":
            for pk, pv in value.items():
                pk = _snake(pk)
                if pk == "blur_sigma_per_level":
                    pv = {int(level): float(sig) for level, sig in pv.items()}
                pred[pk] = pv
        elif key in PREDICTOR_FIELDS:
            pred[PREDICTOR_FIELDS[key]] = value
        elif key in fields:
            top[key] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    if pred:
        top["predictor"] = dataclasses.replace(base.predictor, **pred)
    return dataclasses.replace(base, **top)


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    """One flag per PipelineConfig field; unset flags leave the config untouched."""
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", type=Path, help="TOML file overriding the defaults")
    types = {"r1": float, "delta": int, "target": float, "s": int, "overlap_voxels": int,
             "alpha": float, "n_v": int, "tau": float, "tau_intermediate": float,
             "scorer": str, "ray_pool_levels": str, "patch_side": int, "seed": int,
             "workers": int}
    for name, typ in types.items():
        g.add_argument("--" + _kebab(name), dest=name, type=typ, default=None)
    g.add_argument("--ray-pool", dest="ray_pool", action=argparse.BooleanOptionalAction,
                   default=None)
    g.add_argument("--predictor-name", dest="predictor_name", default=None)
    g.add_argument("--window-radius", dest="window_radius", type=int, default=None)
    g.add_argument("--sigma-color", dest="sigma_color", type=float, default=None)


def resolve_config(args) -> PipelineConfig:
    """Defaults, then the config file, then explicit flags."""
    config = PipelineConfig()
    if getattr(args, "config", None):
        config = config_from_dict(load_config(args.config), config)
    names = [f.name for f in dataclasses.fields(PipelineConfig) if f.name != "predictor"]
    flags = {n: getattr(args, n) for n in [*names, *PREDICTOR_FIELDS]
             if getattr(args, n, None) is not None}
    return config_from_dict(flags, config)


def config_lines(config: PipelineConfig) -> list[str]:
    d = dataclasses.asdict(config)
    pred = d.pop("predictor")
    lines = [f"{k} = {v!r}" for k, v in d.items()]
    lines += [f"predictor.{k} = {v!r}" for k, v in pred.items()]
    return lines


# ------------------------------------------------------------------- inputs


def write_bbox(path, bbox: BoundingBox) -> None:
    Path(path).write_text("lower " + " ".join(repr(float(v)) for v in bbox.lower) + "\n"
                          "upper " + " ".join(repr(float(v)) for v in bbox.upper) + "\n")


def read_bbox(path) -> BoundingBox:
    vals = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if parts:
            vals[parts[0]] = tuple(float(v) for v in parts[1:4])
    if set(vals) != {"lower", "upper"}:
        raise ValueError(f"{path}: expected 'lower' and 'upper' lines")
    return BoundingBox(vals["lower"], vals["upper"])


def image_name(camera_id: int) -> str:
    return f"{camera_id:04d}.ppm"


def load_inputs(root: Path):
    """Cameras with images, the bbox, and every input file for hashing."""
    cams = read_cameras(root / "cameras.txt")
    files = [root / "cameras.txt", root / "bbox.txt"]
    with_images = []
    for cam in cams:
        path = root / "images" / image_name(cam.id)
        files.append(path)
        with_images.append(cam.with_image(read_ppm(path)))
    return with_images, read_bbox(root / "bbox.txt"), files


def scene_config(args) -> dict:
    if getattr(args, "scene", None):
        return load_config(args.scene)
    return preset_config(args.preset)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclasses.dataclass
class Inputs:
    cameras: list
    bbox: BoundingBox
    reference: np.ndarray | None = None
    files: list = dataclasses.field(default_factory=list)  # (label, path) pairs to hash
    label: str = ""
    spec: object = None


def scene_inputs(args) -> Inputs:
    """Cameras, bbox and optional reference from --input, or a rendered scene."""
    if args.input:
        cams, bbox, files = load_inputs(args.input)
        inputs = Inputs(cams, bbox, files=[(str(f.relative_to(args.input)), f) for f in files],
                        label=str(args.input))
        ref = args.input / "reference.ply"
        if ref.exists():
            inputs.reference = read_ply(ref)
            inputs.files.append(("reference.ply", ref))
        return inputs
    cfg = scene_config(args)
    spec = scene_from_dict(cfg)
    cams, _ = render(spec)
    return Inputs(cams, spec.bounding_box(), label="scene " + json.dumps(cfg, sort_keys=True),
                  spec=spec)


# --------------------------------------------------------------------- verbs


def cmd_gen_scene(args) -> int:
    cfg = scene_config(args)
    spec = scene_from_dict(cfg)
    out: Path = args.out
    (out / "images").mkdir(parents=True, exist_ok=True)
    cams, _ = render(spec)
    write_cameras(out / "cameras.txt", cams)
    for cam in cams:
        write_ppm(out / "images" / image_name(cam.id), cam.image)
    bbox = spec.bounding_box()
    write_bbox(out / "bbox.txt", bbox)
    write_ply(out / "reference.ply", ground_truth_cloud(spec, args.gt_resolution).points)
    (out / "scene.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(cams)} views to {out}")
    return 0


def eval_reference(args, inputs: Inputs, config: PipelineConfig):
    if args.reference:
        return read_ply(args.reference)
    if inputs.reference is not None:
        return inputs.reference
    if inputs.spec is not None:
        return ground_truth_cloud(inputs.spec, config.target).points
    return None


def cmd_reconstruct(args) -> int:
    config = resolve_config(args)
    inputs = scene_inputs(args)
    if args.config:
        inputs.files.append((str(args.config), args.config))
    rec = reconstruct(inputs.cameras, inputs.bbox, config)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_ply(out / "final.ply", rec.surface.points)
    for k, level in enumerate(rec.levels, 1):
        write_ply(out / f"level_{k}.ply", level.points)
    (out / "ledger.csv").write_text(rec.ledger.to_csv())

    lines = [f"status {rec.status}"]
    for k in sorted(rec.ledger.cells_scheduled):
        lines.append(f"level {k}: cells scheduled {rec.ledger.cells_scheduled[k]} "
                     f"processed {rec.ledger.cells_processed[k]} points {len(rec.levels[k - 1])}")
    lines.append(f"dense baseline {rec.ledger.dense_baseline}")
    lines.append(f"speedup {speedup_ratio(rec.ledger):.6g}")
    ref = eval_reference(args, inputs, config)
    if ref is not None and len(ref) and len(rec.surface):
        threshold = args.threshold or 2.0 * config.target
        report = evaluate(rec.surface, ref, threshold)
        (out / "report.csv").write_text(report.to_csv())
        lines.append(report.to_text().rstrip("\n"))
    (out / "report.txt").write_text("\n".join(lines) + "\n")

    manifest = [f"sparsemvs {__version__}", f"input {inputs.label}"]
    manifest += [f"sha256 {sha256(path)} {name}" for name, path in inputs.files]
    manifest += config_lines(config)
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    print("\n".join(lines))
    return 0


def cmd_evaluate(args) -> int:
    report = evaluate(read_ply(args.pred), read_ply(args.ref), args.threshold)
    if args.csv:
        args.csv.write_text(report.to_csv())
    print(report.to_text(), end="")
    return 0


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, path: Path | None) -> None:
    if path:
        path.write_text(text)
    else:
        sys.stdout.write(text)


def cmd_bench_sparsity(args) -> int:
    config = resolve_config(args)
    inputs = scene_inputs(args)
    ref = eval_reference(args, inputs, config)
    by_id = {c.id: c for c in inputs.cameras}
    ids = sorted(by_id)
    header = ["sparsity", "batchsize", "num_views", "view_ids", "mean_baseline_deg",
              "precision", "recall", "f_score"]
    rows = []
    for n in range(1, args.max_sparsity + 1):
        for b in range(1, min(args.batchsize, n) + 1):
            chosen = [by_id[i] for i in sparsity_sample(ids, n, b)]
            row = [n, b, len(chosen), " ".join(str(c.id) for c in chosen)]
            theta = (math.degrees(mean_baseline_angle(ref, chosen))
                     if ref is not None and len(chosen) >= 2 else float("nan"))
            row.append(repr(theta))
            if args.sample_only or len(chosen) < 2:
                row += ["", "", ""]
            else:
                rec = reconstruct(chosen, inputs.bbox, config)
                threshold = args.threshold or 2.0 * config.target
                row += [repr(v) for v in f_score(rec.surface, ref, threshold)]
            rows.append(row)
            logger.info("sparsity %d batch %d: %d views", n, b, len(chosen))
    _emit(_csv_text(header, rows), args.csv)
    return 0


def parse_sweep(text: str) -> list[tuple[float, float]]:
    """``"8:8,16:4"`` -> [(r1, target), ...]."""
    pairs = []
    for item in text.split(","):
        r1, target = item.split(":")
        pairs.append((float(r1), float(target)))
    return pairs


def cmd_bench_cubes(args) -> int:
    base = resolve_config(args)
    inputs = scene_inputs(args)
    header = ["r1", "target", "levels", "relative_resolution", "dense_baseline",
              "cells_processed", "speedup", "status"]
    rows = []
    for r1, target in parse_sweep(args.sweep):
        config = dataclasses.replace(base, r1=r1, target=target)
        rec = reconstruct(inputs.cameras, inputs.bbox, config)
        ledger = rec.ledger
        rows.append([repr(r1), repr(target), len(ledger.cells_scheduled),
                     repr(relative_resolution(inputs.bbox, target)), ledger.dense_baseline,
                     ledger.total_processed, repr(speedup_ratio(ledger)), rec.status])
    _emit(_csv_text(header, rows), args.csv)
    return 0


# -------------------------------------------------------------------- parser


def _add_scene_source(p: argparse.ArgumentParser, default_preset: str, allow_input=True) -> None:
    g = p.add_mutually_exclusive_group()
    if allow_input:
        g.add_argument("--input", type=Path, help="directory written by gen-scene")
    g.add_argument("--scene", type=Path, help="scene description (TOML)")
    g.add_argument("--preset", choices=PRESETS, default=default_preset)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsemvs", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="render a synthetic scene with ground truth")
    _add_scene_source(p, "sphere", allow_input=False)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--gt-resolution", type=float, default=2.0)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("reconstruct", help="run the coarse-to-fine pipeline")
    _add_scene_source(p, "sphere")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--reference", type=Path)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="compare two PLY clouds")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-sparsity", help="f-score against view sparsity")
    _add_scene_source(p, "sphere12")
    _add_config_flags(p)
    p.add_argument("--max-sparsity", type=int, required=True)
    p.add_argument("--batchsize", type=int, default=1)
    p.add_argument("--threshold", type=float)
    p.add_argument("--reference", type=Path)
    p.add_argument("--sample-only", action="store_true",
                   help="list the sampled views without reconstructing")
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_bench_sparsity)

    p = sub.add_parser("bench-cubes", help="cube-count speedup against relative resolution")
    _add_scene_source(p, "sphere-small")
    _add_config_flags(p)
    p.add_argument("--sweep", default="8:8,16:4,8:2,16:1",
                   help="comma-separated r1:target schedules")
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_bench_cubes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, tomllib.TOMLDecodeError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"sparsemvs-error: {type(exc).__name__}: {message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
