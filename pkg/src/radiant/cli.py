"""Pipeline CLI: generate synthetic data, train object/background fields,
run iterative dataset-update edits, compose with a transform, evaluate.

Subcommands compose: running gen-data, train, edit, compose, eval
separately produces byte-identical artifacts to the one-shot pipeline.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .bridge import RemoteEditor, RemoteEndpoint, RemoteError
from .core import SrtTransform, VoxelField, rotation_about_axis
from .dataio import DatasetError, load_dataset, load_field, save_dataset, save_field, save_png, write_pfm
from .idu import EditInstruction, IduDataset, IduError, IduSchedule, builtin_editor, idu_run, make_segmenter
from .optim import DivergenceError, TrainConfig, train_background_field, train_object_field
from .render import RenderConfig, render_merged, render_view, object_centroid
from .synth import (
    CameraRig,
    GroundPlane,
    MultiViewDataset,
    Primitive,
    SceneSpec,
    ViewData,
    generate_scene,
    heldout_cameras,
    leakage,
    mask_from_alpha,
    mask_iou,
    orbit_cameras,
    psnr,
    render_dataset,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGENCE = 3
EXIT_REMOTE = 4

# per-stage rng stream tags, combined with the global seed
SEED_TRAIN_OBJECT = 1
SEED_TRAIN_BACKGROUND = 2
SEED_IDU_SCHEDULE = 3
SEED_IDU_TRAIN = 4
SEED_SCENE = 5

DATASET_VARIANTS = ("full", "object", "background")


class InputError(ValueError):
    """Bad config, missing files, or invalid arguments (exit code 2)."""


def default_config() -> dict:
    return {
        "seed": 0,
        "out_dir": "out",
        "scene": {
            "resolution": [96, 96, 96],
            "bounds_min": [-1.2, -1.2, -1.2],
            "bounds_max": [1.2, 1.2, 1.2],
            "background_color": [0.04, 0.05, 0.08],
            "samples_per_ray": 128,
            "heldout_count": 8,
            "primitives": [
                {"shape": "sphere", "center": [0.0, -0.05, 0.0], "size": 0.38,
                 "color": [0.85, 0.16, 0.12], "role": "object"},
                {"shape": "box", "center": [-0.72, 0.42, 0.55], "size": [0.2, 0.32, 0.2],
                 "color": [0.15, 0.55, 0.2], "role": "background"},
                {"shape": "box", "center": [0.7, 0.5, -0.5], "size": [0.22, 0.24, 0.22],
                 "color": [0.2, 0.3, 0.75], "role": "background"},
            ],
            "ground_plane": {"enabled": True, "y": 0.75, "thickness": 0.3,
                             "color_a": [0.82, 0.82, 0.8], "color_b": [0.2, 0.25, 0.4],
                             "checker_size": 0.4},
            "rig": {"count": 24, "radius": 2.2, "height": 0.9, "look_at": [0.0, 0.0, 0.0],
                    "image_width": 64, "image_height": 64, "fov_deg": 55.0,
                    "near": 0.5, "far": 5.0},
        },
        "train_object": {"iterations": 700, "rays_per_batch": 2048, "learning_rate": 0.15,
                         "adam_beta1": 0.9, "adam_beta2": 0.999, "adam_eps": 1e-8,
                         "depth_loss_weight": 0.0, "samples_per_ray": 64},
        "train_background": {"iterations": 700, "rays_per_batch": 2048, "learning_rate": 0.15,
                             "adam_beta1": 0.9, "adam_beta2": 0.999, "adam_eps": 1e-8,
                             "depth_loss_weight": 0.05, "samples_per_ray": 64},
        "idu": {"outer_iterations": 8, "d": 1, "n": 120,
                "instruction": "recolor the object deep blue"},
        "editor": {"builtin": {"kind": "recolor",
                               "params": {"target": [0.1, 0.15, 0.8], "strength": 0.35}}},
        "segmenter": "known_mask",
        "transform": {"scale": 1.0, "rotation_axis": [0.0, 1.0, 0.0], "rotation_degrees": 0.0,
                      "translation": [0.0, 0.0, 0.0], "centroid": None},
        "compose": {"source": "edited"},
    }


def worker_count() -> int:
    """Worker cap from RADIANT_THREADS (0 or unset = auto)."""
    raw = os.environ.get("RADIANT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        return min(os.cpu_count() or 1, 8)
    return n


def _parallel_map(fn, items):
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def stage_seed(seed: int, tag: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag])
    return int(ss.generate_state(1, np.uint64)[0])


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key == "editor":
            out[key] = copy.deepcopy(value)  # replaced wholesale: exactly one kind
        elif isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set_dot_path(config: dict, path: str, raw_value: str):
    keys = path.split(".")
    # selecting one editor branch replaces the other
    if keys[0] == "editor" and len(keys) > 1 and keys[1] in ("builtin", "remote"):
        other = "remote" if keys[1] == "builtin" else "builtin"
        config["editor"].pop(other, None)
        config["editor"].setdefault(keys[1], {})
    node = config
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise InputError(f"unknown config key {path!r}")
        node = node[k]
    if not isinstance(node, dict) or (keys[-1] not in node and keys[0] != "editor"):
        raise InputError(f"unknown config key {path!r}")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    node[keys[-1]] = value


def load_config(config_path: Optional[str], overrides, seed: Optional[int],
                out_dir: Optional[str]) -> dict:
    config = default_config()
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise InputError(f"config file {path} does not exist")
        try:
            with open(path, "r", encoding="utf-8") as f:
                user = json.load(f)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        config = _deep_merge(config, user)
    for dot_path, raw in overrides:
        _set_dot_path(config, dot_path, raw)
    if seed is not None:
        config["seed"] = seed
    if out_dir is not None:
        config["out_dir"] = out_dir
    validate_config(config)
    return config


def validate_config(config: dict):
    editor = config.get("editor", {})
    selected = [k for k in ("builtin", "remote") if k in editor]
    if len(selected) != 1:
        raise InputError("config must select exactly one editor (builtin or remote)")
    try:
        parse_scene(config["scene"])
    except ValueError as exc:
        raise InputError(str(exc)) from None


def parse_scene(scene: dict) -> SceneSpec:
    prims = [Primitive(p["shape"], tuple(p["center"]), p["size"], tuple(p["color"]), p["role"])
             for p in scene["primitives"]]
    return SceneSpec(
        primitives=prims,
        ground_plane=GroundPlane(**scene["ground_plane"]),
        resolution=tuple(scene["resolution"]),
        bounds_min=tuple(scene["bounds_min"]),
        bounds_max=tuple(scene["bounds_max"]),
        rig=CameraRig(**scene["rig"]),
        background_color=tuple(scene["background_color"]),
        samples_per_ray=scene["samples_per_ray"],
        heldout_count=scene["heldout_count"],
    )


def train_config_from(section: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        iterations=section["iterations"], rays_per_batch=section["rays_per_batch"],
        learning_rate=section["learning_rate"], adam_beta1=section["adam_beta1"],
        adam_beta2=section["adam_beta2"], adam_eps=section["adam_eps"],
        depth_loss_weight=section["depth_loss_weight"], rng_seed=seed,
        samples_per_ray=section["samples_per_ray"])


def build_editor(config: dict):
    editor = config["editor"]
    if "builtin" in editor:
        spec = editor["builtin"]
        return builtin_editor(spec["kind"], spec.get("params"))
    remote = editor["remote"]
    endpoint = RemoteEndpoint(
        base_url=remote["base_url"], timeout=remote.get("timeout", 30.0),
        max_retries=remote.get("max_retries", 2), auth_token=remote.get("auth_token"))
    return RemoteEditor(endpoint)


def build_transform(config: dict, object_field: VoxelField) -> SrtTransform:
    tr = config["transform"]
    degrees = float(tr["rotation_degrees"])
    rotation = rotation_about_axis(tr["rotation_axis"], degrees) if degrees != 0.0 else np.eye(3)
    centroid = tr["centroid"]
    if centroid is None:
        centroid = object_centroid(object_field)
    return SrtTransform(float(tr["scale"]), rotation, np.asarray(tr["translation"], dtype=np.float64),
                        np.asarray(centroid, dtype=np.float64))


# ---------------------------------------------------------------------------
# output layout helpers

def _paths(config: dict) -> dict:
    out = Path(config["out_dir"])
    return {
        "out": out,
        "data": out / "data",
        "gt": out / "gt",
        "ckpt": out / "ckpt",
        "logs": out / "logs",
        "renders": out / "renders",
        "report": out / "report.json",
    }


def _say(config, *parts):
    if not config.get("_quiet"):
        print(*parts)


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(config: dict) -> None:
    """Generate ground-truth fields plus train/held-out dataset directories."""
    spec = parse_scene(config["scene"])
    paths = _paths(config)
    try:
        paths["out"].mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {paths['out']}: {exc}") from None
    fields = generate_scene(spec, stage_seed(config["seed"], SEED_SCENE))
    cams = orbit_cameras(spec.rig)
    held = heldout_cameras(spec)
    paths["gt"].mkdir(parents=True, exist_ok=True)
    for variant in DATASET_VARIANTS:
        save_field(getattr(fields, variant), paths["gt"] / f"{variant}.rcvf")

    def build(job):
        variant, cameras, directory = job
        ds = render_dataset(fields, cameras, spec, which=variant)
        return directory, ds

    jobs = []
    for variant in DATASET_VARIANTS:
        jobs.append((variant, cams, paths["data"] / variant))
        jobs.append((variant, held, paths["data"] / f"heldout_{variant}"))
    for directory, ds in _parallel_map(build, jobs):
        save_dataset(ds, directory)

    with open(paths["out"] / "config.json", "w", encoding="utf-8") as f:
        payload = {k: v for k, v in config.items() if not k.startswith("_")}
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")
    _say(config, f"scene: {len(spec.primitives)} primitives, grid {spec.resolution}")
    _say(config, f"views: {spec.rig.count} train + {spec.heldout_count} held-out, "
                 f"{spec.rig.image_width}x{spec.rig.image_height}")
    for variant in DATASET_VARIANTS:
        _say(config, f"dataset {variant}: {paths['data'] / variant} "
                     f"(images, masks, depth, cameras.json, meta.json)")


def cmd_train(config: dict, target: str) -> None:
    """Fit the object or background field and write its checkpoint."""
    if target not in ("object", "background"):
        raise InputError(f"unknown training target {target!r}")
    paths = _paths(config)
    data_dir = paths["data"] / target
    if not data_dir.exists():
        kind = "inpainted background images" if target == "background" else "object RGBA images"
        raise InputError(f"missing {kind}: dataset directory {data_dir} does not exist "
                         "(run gen-data first)")
    dataset = load_dataset(data_dir)
    resolution = tuple(config["scene"]["resolution"])
    paths["ckpt"].mkdir(parents=True, exist_ok=True)
    paths["logs"].mkdir(parents=True, exist_ok=True)
    log_path = paths["logs"] / f"train_{target}.log"
    if target == "object":
        cfg = train_config_from(config["train_object"], stage_seed(config["seed"], SEED_TRAIN_OBJECT))
        with open(log_path, "w", encoding="utf-8") as log:
            field = train_object_field(dataset, cfg, resolution=resolution, log=log)
    else:
        cfg = train_config_from(config["train_background"],
                                stage_seed(config["seed"], SEED_TRAIN_BACKGROUND))
        with open(log_path, "w", encoding="utf-8") as log:
            field = train_background_field(dataset, cfg, resolution=resolution, log=log)
    ckpt = paths["ckpt"] / f"{target}.rcvf"
    save_field(field, ckpt)
    with open(log_path, "r", encoding="utf-8") as f:
        lines = f.read().strip().splitlines()
    final = lines[-1].split() if lines else ["-", "-", "-"]
    _say(config, f"trained {target}: {cfg.iterations} iterations, "
                 f"final loss {final[1]} psnr {final[2]} -> {ckpt}")


def _mean_object_color(field, dataset, spec_cfg):
    """Mean rendered object color over mask pixels of the first view."""
    view = dataset.views[0]
    rendered = render_view(field, view.camera, spec_cfg)
    sel = view.mask.data & (rendered.alpha > 0.5)
    if not sel.any():
        return np.zeros(3)
    straight = rendered.rgb / np.maximum(rendered.alpha, 1e-6)[..., None]
    return np.clip(straight, 0.0, 1.0)[sel].mean(axis=0)


def cmd_edit(config: dict) -> None:
    """Run the iterative dataset update loop from the trained object field."""
    paths = _paths(config)
    ckpt_in = paths["ckpt"] / "object.rcvf"
    if not ckpt_in.exists():
        raise InputError(f"missing object checkpoint {ckpt_in} (run train first)")
    data_dir = paths["data"] / "object"
    if not data_dir.exists():
        raise InputError(f"missing dataset directory {data_dir} (run gen-data first)")
    field = load_field(ckpt_in)
    dataset = load_dataset(data_dir)
    idu_dataset = IduDataset.from_multiview(dataset)
    idu_cfg = config["idu"]
    schedule = IduSchedule(outer_iterations=idu_cfg["outer_iterations"], d=idu_cfg["d"],
                           n=idu_cfg["n"], rng_seed=stage_seed(config["seed"], SEED_IDU_SCHEDULE))
    train_cfg = train_config_from(config["train_object"],
                                  stage_seed(config["seed"], SEED_IDU_TRAIN))
    editor = build_editor(config)
    segmenter = make_segmenter(config["segmenter"])
    instruction = EditInstruction(idu_cfg["instruction"])
    spec = parse_scene(config["scene"])
    probe_cfg = spec.render_config(background="transparent")
    recolor_target = None
    builtin = config["editor"].get("builtin")
    if builtin and builtin.get("kind") == "recolor":
        recolor_target = np.asarray(builtin.get("params", {}).get("target", (0.0, 0.0, 1.0)))

    paths["logs"].mkdir(parents=True, exist_ok=True)
    log_path = paths["logs"] / "edit.log"
    with open(log_path, "w", encoding="utf-8") as log:
        log.write(f"# idu d={schedule.d} n={schedule.n} "
                  f"outer_iterations={schedule.outer_iterations}\n")

        def on_outer_end(outer, fld, ds):
            color = _mean_object_color(fld, ds, probe_cfg)
            line = f"outer {outer} mean_color {color[0]:.6f} {color[1]:.6f} {color[2]:.6f}"
            if recolor_target is not None:
                line += f" edit_alignment {np.abs(color - recolor_target).mean():.6f}"
            log.write(line + "\n")

        field, idu_dataset = idu_run(field, idu_dataset, editor, segmenter, schedule,
                                     train_cfg, instruction, on_outer_end=on_outer_end)

    paths["ckpt"].mkdir(parents=True, exist_ok=True)
    save_field(field, paths["ckpt"] / "object_edited.rcvf")
    edited_views = [ViewData(v.camera, v.current.rgb, v.current.alpha, v.mask, None, None)
                    for v in idu_dataset.views]
    edited = MultiViewDataset(edited_views, idu_dataset.bounds_min, idu_dataset.bounds_max,
                              idu_dataset.near, idu_dataset.far,
                              background_color=None, samples_per_ray=dataset.samples_per_ray)
    save_dataset(edited, paths["data"] / "object_edited")
    _say(config, f"edited field -> {paths['ckpt'] / 'object_edited.rcvf'}; "
                 f"log -> {log_path}")


def _compose_object_ckpt(config: dict, paths: dict) -> Path:
    source = config["compose"]["source"]
    if source not in ("edited", "trained", "gt"):
        raise InputError(f"unknown compose source {source!r}")
    if source == "gt":
        return paths["gt"] / "object.rcvf"
    if source == "trained":
        return paths["ckpt"] / "object.rcvf"
    return paths["ckpt"] / "object_edited.rcvf"


def _compose_background_ckpt(config: dict, paths: dict) -> Path:
    if config["compose"]["source"] == "gt":
        return paths["gt"] / "background.rcvf"
    return paths["ckpt"] / "background.rcvf"


def cmd_compose(config: dict) -> None:
    """Render the merged scene with the configured object transform."""
    paths = _paths(config)
    obj_ckpt = _compose_object_ckpt(config, paths)
    bkg_ckpt = _compose_background_ckpt(config, paths)
    for ckpt in (obj_ckpt, bkg_ckpt):
        if not ckpt.exists():
            raise InputError(f"missing checkpoint {ckpt}")
    object_field = load_field(obj_ckpt)
    bkg_field = load_field(bkg_ckpt)
    data_dir = paths["data"] / "full"
    if not data_dir.exists():
        raise InputError(f"missing dataset directory {data_dir} (run gen-data first)")
    dataset = load_dataset(data_dir)
    spec = parse_scene(config["scene"])
    cfg = spec.render_config()
    transform = build_transform(config, object_field)
    paths["renders"].mkdir(parents=True, exist_ok=True)

    def render_one(item):
        i, view = item
        rendered = render_merged(object_field, bkg_field, transform, view.camera, cfg)
        return i, rendered

    for i, rendered in _parallel_map(render_one, list(enumerate(dataset.views))):
        save_png(paths["renders"] / f"rgb_{i:03d}.png", rendered.rgb)
        write_pfm(paths["renders"] / f"depth_{i:03d}.pfm", rendered.depth)
    _say(config, f"composed {len(dataset.views)} views -> {paths['renders']} "
                 f"(scale {transform.scale}, source {config['compose']['source']})")


def cmd_eval(config: dict) -> None:
    """Metrics report: per-view PSNR vs the true full scene, object leakage,
    mask IoU, and adjacent-frame consistency."""
    paths = _paths(config)
    renders_dir = paths["renders"]
    if not renders_dir.exists():
        raise InputError(f"missing renders directory {renders_dir} (run compose first)")
    gt_full_path = paths["gt"] / "full.rcvf"
    if not gt_full_path.exists():
        raise InputError(f"missing ground-truth checkpoint {gt_full_path}")
    data_dir = paths["data"] / "full"
    dataset = load_dataset(data_dir)
    obj_dataset = load_dataset(paths["data"] / "object")
    gt_full = load_field(gt_full_path)
    obj_ckpt = _compose_object_ckpt(config, paths)
    if not obj_ckpt.exists():
        raise InputError(f"missing checkpoint {obj_ckpt}")
    object_field = load_field(obj_ckpt)
    spec = parse_scene(config["scene"])
    cfg = spec.render_config()
    cfg_alpha = spec.render_config(background="transparent")

    from .dataio import from_uint8, load_png, to_uint8

    renders = []
    for i in range(len(dataset.views)):
        png = renders_dir / f"rgb_{i:03d}.png"
        if not png.exists():
            raise InputError(f"missing render {png}")
        renders.append(load_png(png)[0])

    def ref_one(view):
        # quantize like the stored renders so identical images score the cap
        return from_uint8(to_uint8(render_view(gt_full, view.camera, cfg).rgb))

    refs = _parallel_map(ref_one, dataset.views)
    psnr_per_view = [psnr(r, ref) for r, ref in zip(renders, refs)]

    def leak_one(view):
        rendered = render_view(object_field, view.camera, cfg_alpha)
        lk = leakage(rendered.alpha, view.mask)
        iou = mask_iou(mask_from_alpha(rendered.alpha, 0.5), view.mask)
        return lk, iou

    leak_iou = _parallel_map(leak_one, obj_dataset.views)
    temporal = [psnr(renders[i], renders[i + 1]) for i in range(len(renders) - 1)]

    report = {
        "psnr_per_view": psnr_per_view,
        "mean_psnr": float(np.mean(psnr_per_view)),
        "leakage": float(np.mean([x[0] for x in leak_iou])),
        "mask_iou": float(np.mean([x[1] for x in leak_iou])),
        "temporal_consistency": float(np.mean(temporal)) if temporal else 99.0,
    }
    with open(paths["report"], "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1, sort_keys=True)
        f.write("\n")
    _say(config, f"report -> {paths['report']}: mean_psnr {report['mean_psnr']:.2f} dB, "
                 f"leakage {report['leakage']:.4f}, mask_iou {report['mask_iou']:.3f}")


def cmd_pipeline(config: dict) -> None:
    """gen-data, train object+background, edit, compose, eval, in sequence."""
    cmd_gen_data(config)
    cmd_train(config, "object")
    cmd_train(config, "background")
    cmd_edit(config)
    cmd_compose(config)
    cmd_eval(config)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radiant",
        description="voxel radiance-field pipeline: disentangle, edit, recompose")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="global seed override")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", help="write ground-truth fields and datasets")
    p_train = sub.add_parser("train", help="fit the object or background field")
    p_train.add_argument("target", choices=["object", "background"])
    sub.add_parser("edit", help="run the iterative dataset update loop")
    sub.add_parser("compose", help="render the merged scene with the transform")
    sub.add_parser("eval", help="write the metrics report")
    sub.add_parser("pipeline", help="run every stage in order")
    return parser


def _split_overrides(argv):
    """Pull `--dot.path value` pairs out of argv before argparse sees them."""
    rest, overrides = [], []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg.startswith("--") and "." in arg.split("=", 1)[0]:
            if "=" in arg:
                key, value = arg[2:].split("=", 1)
                overrides.append((key, value))
                i += 1
            else:
                if i + 1 >= len(argv):
                    raise InputError(f"flag {arg} needs a value")
                overrides.append((arg[2:], argv[i + 1]))
                i += 2
        else:
            rest.append(arg)
            i += 1
    return rest, overrides


def run(argv) -> int:
    rest, overrides = _split_overrides(list(argv))
    parser = build_parser()
    args = parser.parse_args(rest)
    config = load_config(args.config, overrides, args.seed, args.out)
    config["_quiet"] = bool(args.quiet)
    if args.command == "gen-data":
        cmd_gen_data(config)
    elif args.command == "train":
        cmd_train(config, args.target)
    elif args.command == "edit":
        cmd_edit(config)
    elif args.command == "compose":
        cmd_compose(config)
    elif args.command == "eval":
        cmd_eval(config)
    elif args.command == "pipeline":
        cmd_pipeline(config)
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except IduError as exc:
        cause = exc.__cause__
        if isinstance(cause, RemoteError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_REMOTE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RemoteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (InputError, DatasetError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # map anything unexpected onto the input code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
