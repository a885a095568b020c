"""On-disk formats: dataset directories (PNG images, PNG masks, PFM depth,
JSON cameras/metadata) and the RCVF voxel-field checkpoint.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from .core import Camera, MaskImage, VoxelField
from .synth import MultiViewDataset, ViewData

CHECKPOINT_MAGIC = b"RCVF"
CHECKPOINT_VERSION = 1


class DatasetError(ValueError):
    """A dataset directory is missing a file or has a malformed field."""


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / 255.0


def save_png(path, rgb: np.ndarray, alpha: Optional[np.ndarray] = None):
    """8-bit RGB or RGBA PNG from unit-range float arrays."""
    data = to_uint8(rgb)
    if alpha is not None:
        data = np.concatenate([data, to_uint8(alpha)[..., None]], axis=-1)
        mode = "RGBA"
    else:
        mode = "RGB"
    Image.fromarray(data, mode=mode).save(path)


def load_png(path):
    """Returns (rgb (H,W,3) float, alpha (H,W) float or None)."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 2:
        rgb = from_uint8(np.repeat(arr[..., None], 3, axis=-1))
        return rgb, None
    rgb = from_uint8(arr[..., :3])
    alpha = from_uint8(arr[..., 3]) if arr.shape[-1] == 4 else None
    return rgb, alpha


def save_mask_png(path, mask: MaskImage):
    Image.fromarray(mask.data.astype(np.uint8) * 255, mode="L").save(path)


def load_mask_png(path) -> MaskImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    if not np.all(np.isin(arr, (0, 255))):
        raise DatasetError(f"{path}: mask pixels must be 0 or 255")
    return MaskImage(arr == 255)


def write_pfm(path, data: np.ndarray):
    """Grayscale PFM, little-endian (scale header -1.0), rows bottom-up."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{data.shape[1]} {data.shape[0]}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise DatasetError(f"{path}: not a grayscale PFM file")
        dims = f.readline().split()
        if len(dims) != 2:
            raise DatasetError(f"{path}: malformed PFM dimensions")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(4 * w * h), dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def _dump_json(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def _camera_to_json(cam: Camera) -> dict:
    return {
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "width": cam.width, "height": cam.height,
        "cam_to_world": [float(v) for v in cam.cam_to_world.reshape(-1)],
    }


def _camera_from_json(entry: dict, source: str, index: int) -> Camera:
    try:
        m = np.asarray(entry["cam_to_world"], dtype=np.float64)
        if m.shape != (16,):
            raise DatasetError(
                f"{source}: camera {index} cam_to_world must hold 16 row-major numbers")
        return Camera(entry["fx"], entry["fy"], entry["cx"], entry["cy"],
                      entry["width"], entry["height"], m.reshape(4, 4))
    except KeyError as exc:
        raise DatasetError(f"{source}: camera {index} missing field {exc.args[0]!r}") from None


def save_dataset(dataset: MultiViewDataset, path) -> None:
    """Write the dataset directory layout.

    images/NNN.png (RGBA when alpha is present), masks/NNN.png,
    depth/NNN.pfm, cameras.json, meta.json. Depth pixels flagged invalid
    are stored as the far value so validity survives the round trip.
    """
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    have_masks = any(v.mask is not None for v in dataset.views)
    have_depth = any(v.depth is not None for v in dataset.views)
    if have_masks:
        (root / "masks").mkdir(exist_ok=True)
    if have_depth:
        (root / "depth").mkdir(exist_ok=True)
    for i, view in enumerate(dataset.views):
        save_png(root / "images" / f"{i:03d}.png", view.rgb, view.alpha)
        if view.mask is not None:
            save_mask_png(root / "masks" / f"{i:03d}.png", view.mask)
        if view.depth is not None:
            depth = np.asarray(view.depth, dtype=np.float64)
            if view.depth_valid is not None:
                depth = np.where(view.depth_valid, depth, dataset.far)
            write_pfm(root / "depth" / f"{i:03d}.pfm", depth)
    _dump_json(root / "cameras.json", [_camera_to_json(v.camera) for v in dataset.views])
    meta = {
        "near": dataset.near,
        "far": dataset.far,
        "bounds": {"min": [float(v) for v in dataset.bounds_min],
                   "max": [float(v) for v in dataset.bounds_max]},
        "background_color": (None if dataset.background_color is None
                             else [float(c) for c in dataset.background_color]),
        "samples_per_ray": dataset.samples_per_ray,
    }
    _dump_json(root / "meta.json", meta)


def load_dataset(path) -> MultiViewDataset:
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    for required in ("cameras.json", "meta.json"):
        if not (root / required).exists():
            raise DatasetError(f"{root}: missing {required}")

    def read_json(name):
        try:
            with open(root / name, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{root / name}: invalid JSON ({exc})") from None

    cam_entries = read_json("cameras.json")
    meta = read_json("meta.json")
    try:
        near, far = float(meta["near"]), float(meta["far"])
        bounds_min = np.asarray(meta["bounds"]["min"], dtype=np.float64)
        bounds_max = np.asarray(meta["bounds"]["max"], dtype=np.float64)
    except KeyError as exc:
        raise DatasetError(f"{root / 'meta.json'}: missing field {exc.args[0]!r}") from None
    bg = meta.get("background_color")
    samples = int(meta.get("samples_per_ray", 128))

    views: List[ViewData] = []
    for i, entry in enumerate(cam_entries):
        cam = _camera_from_json(entry, str(root / "cameras.json"), i)
        img_path = root / "images" / f"{i:03d}.png"
        if not img_path.exists():
            raise DatasetError(f"{root}: missing images/{i:03d}.png")
        rgb, alpha = load_png(img_path)
        mask_path = root / "masks" / f"{i:03d}.png"
        mask = load_mask_png(mask_path) if mask_path.exists() else None
        depth_path = root / "depth" / f"{i:03d}.pfm"
        depth = depth_valid = None
        if depth_path.exists():
            depth = read_pfm(depth_path)
            depth_valid = depth != far
        views.append(ViewData(cam, rgb, alpha, mask, depth, depth_valid))
    return MultiViewDataset(views, bounds_min, bounds_max, near, far,
                            background_color=None if bg is None else tuple(bg),
                            samples_per_ray=samples)


def save_field(field: VoxelField, path) -> None:
    """RCVF checkpoint: magic, version, resolution, bounds, then density
    and color arrays as little-endian 32-bit floats (C order)."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<3I", *field.resolution))
        f.write(np.concatenate([field.bounds_min, field.bounds_max]).astype("<f8").tobytes())
        f.write(field.density.astype("<f4").tobytes())
        f.write(field.color.astype("<f4").tobytes())


def load_field(path) -> VoxelField:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DatasetError(f"{path}: not an RCVF checkpoint")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise DatasetError(f"{path}: unsupported checkpoint version {version}")
    nx, ny, nz = struct.unpack_from("<3I", blob, 8)
    bounds = np.frombuffer(blob, dtype="<f8", count=6, offset=20)
    n = nx * ny * nz
    offset = 20 + 48
    expected = offset + 4 * n + 12 * n
    if len(blob) != expected:
        raise DatasetError(f"{path}: truncated checkpoint ({len(blob)} bytes, want {expected})")
    density = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(nx, ny, nz)
    color = np.frombuffer(blob, dtype="<f4", count=3 * n,
                          offset=offset + 4 * n).reshape(nx, ny, nz, 3)
    return VoxelField((nx, ny, nz), bounds[:3], bounds[3:],
                      density.astype(np.float64), color.astype(np.float64))
