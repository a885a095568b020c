"""Iterative dataset update: alternate per-view 2D edits of the training
images with object-field training steps so the 3D scene absorbs the edits.
"""
from __future__ import annotations

from dataclasses import dataclass, field as _dc_field
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np

from .core import MaskImage, RgbaImage, VoxelField
from .optim import RayBatchTrainer, TrainConfig
from .render import normalize_seed


class IduError(RuntimeError):
    """An editor or segmenter failure; carries the failing viewpoint."""

    def __init__(self, message: str, viewpoint: Optional[int] = None):
        super().__init__(message)
        self.viewpoint = viewpoint


@dataclass
class EditInstruction:
    """Free-form edit instruction plus optional parameters for procedural editors."""

    text: str
    params: dict = _dc_field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise ValueError("instruction text must be nonempty")


@dataclass
class IduSchedule:
    """Outer iterations, image updates (d) and field updates (n) per iteration."""

    outer_iterations: int = 8
    d: int = 1
    n: int = 150
    rng_seed: int = 0

    def __post_init__(self):
        if self.outer_iterations < 1 or self.d < 1:
            raise ValueError("outer_iterations and d must be >= 1")
        if self.n < 0:
            raise ValueError("n must be >= 0")


@dataclass
class IduView:
    """One viewpoint: the immutable original, the evolving current image,
    its camera, and the working object mask."""

    original: RgbaImage
    current: RgbaImage
    camera: object
    mask: MaskImage


@dataclass
class IduDataset:
    views: List[IduView]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        for i, v in enumerate(self.views):
            for img in (v.original, v.current):
                if (img.width, img.height) != (v.camera.width, v.camera.height):
                    raise ValueError(f"view {i}: image does not match camera dimensions")
            if (v.mask.width, v.mask.height) != (v.camera.width, v.camera.height):
                raise ValueError(f"view {i}: mask does not match camera dimensions")

    def __len__(self) -> int:
        return len(self.views)

    @classmethod
    def from_multiview(cls, dataset) -> "IduDataset":
        views = []
        for i, v in enumerate(dataset.views):
            if v.alpha is None or v.mask is None:
                raise ValueError(f"IDU needs RGBA images and masks (view {i} incomplete)")
            img = RgbaImage(v.rgb.copy(), v.alpha.copy())
            views.append(IduView(img, img.copy(), v.camera, v.mask.copy()))
        return cls(views, dataset.bounds_min.copy(), dataset.bounds_max.copy(),
                   dataset.near, dataset.far)


class Editor(Protocol):
    def edit(self, current_rgb: np.ndarray, original_rgb: np.ndarray,
             instruction: EditInstruction) -> np.ndarray: ...


class Segmenter(Protocol):
    def segment(self, rgb: np.ndarray, prior_mask: MaskImage) -> MaskImage: ...


def alpha_blend_black(img: RgbaImage) -> np.ndarray:
    """RGBA -> RGB over a black background: rgb * alpha."""
    return img.rgb * img.alpha[..., None]


def apply_mask(rgb: np.ndarray, mask: MaskImage) -> RgbaImage:
    """RGB -> RGBA with the mask as alpha (rgb passes through)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[:2] != mask.data.shape:
        raise ValueError(f"rgb {rgb.shape[:2]} and mask {mask.data.shape} dimensions differ")
    return RgbaImage(rgb.copy(), mask.as_float())


class IdentityEditor:
    def edit(self, current_rgb, original_rgb, instruction):
        return current_rgb


class RecolorEditor:
    """Move every pixel a fraction of the way toward a target color."""

    def __init__(self, target, strength: float = 1.0):
        self.target = np.asarray(target, dtype=np.float64)
        if self.target.shape != (3,) or self.target.min() < 0 or self.target.max() > 1:
            raise ValueError("recolor target must be an rgb triple in [0, 1]")
        if not 0.0 <= strength <= 1.0:
            raise ValueError("recolor strength must lie in [0, 1]")
        self.strength = float(strength)

    def edit(self, current_rgb, original_rgb, instruction):
        return (1.0 - self.strength) * current_rgb + self.strength * self.target


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.maximum(maxc, 1e-12), 0.0)
    safe = np.maximum(span, 1e-12)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    h = np.where(maxc == r, (g - b) / safe % 6.0,
                 np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(span == 0, 0.0, h / 6.0)
    return np.stack([h, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    choices = [np.stack(c, axis=-1) for c in
               ((v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q))]
    out = np.select([i[..., None] == k for k in range(6)], choices)
    return out


class HueShiftEditor:
    """Rotate hue by a fixed angle, preserving saturation and value."""

    def __init__(self, degrees: float):
        self.degrees = float(degrees)

    def edit(self, current_rgb, original_rgb, instruction):
        hsv = _rgb_to_hsv(np.asarray(current_rgb, dtype=np.float64))
        hsv[..., 0] = (hsv[..., 0] + self.degrees / 360.0) % 1.0
        return np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)


class BrightenEditor:
    """Scale luminance by a factor, clamping to [0, 1]."""

    def __init__(self, factor: float):
        if factor < 0:
            raise ValueError("brighten factor must be >= 0")
        self.factor = float(factor)

    def edit(self, current_rgb, original_rgb, instruction):
        return np.clip(np.asarray(current_rgb, dtype=np.float64) * self.factor, 0.0, 1.0)


def builtin_editor(kind: str, params: Optional[dict] = None) -> Editor:
    """Procedural oracle editors standing in for a diffusion-based image editor."""
    params = dict(params or {})
    if kind == "identity":
        return IdentityEditor()
    if kind == "recolor":
        return RecolorEditor(params.get("target", (0.0, 0.0, 1.0)),
                             params.get("strength", 1.0))
    if kind == "hue_shift":
        return HueShiftEditor(params.get("degrees", 120.0))
    if kind == "brighten":
        return BrightenEditor(params.get("factor", 1.3))
    raise ValueError(f"unknown editor kind {kind!r}")


class KnownMaskSegmenter:
    """Oracle segmenter: procedural edits do not move object boundaries,
    so the working mask is simply reused."""

    def segment(self, rgb, prior_mask: MaskImage) -> MaskImage:
        return prior_mask.copy()


class AlphaThresholdSegmenter:
    """Marks a pixel as object when it differs from pure black after blending."""

    def __init__(self, eps: float = 1e-3):
        self.eps = float(eps)

    def segment(self, rgb, prior_mask: MaskImage) -> MaskImage:
        return MaskImage(np.abs(np.asarray(rgb)).max(axis=-1) > self.eps)


def make_segmenter(name: str) -> Segmenter:
    if name == "known_mask":
        return KnownMaskSegmenter()
    if name == "alpha_threshold":
        return AlphaThresholdSegmenter()
    raise ValueError(f"unknown segmenter {name!r}")


def _edit_view(view: IduView, v: int, editor: Editor, segmenter: Segmenter,
               instruction: EditInstruction) -> None:
    blended = alpha_blend_black(view.current)
    original = alpha_blend_black(view.original)
    try:
        edited = editor.edit(blended, original, instruction)
    except IduError:
        raise
    except Exception as exc:
        raise IduError(f"editor failed at viewpoint {v}: {exc}", viewpoint=v) from exc
    edited = np.asarray(edited, dtype=np.float64)
    if edited.shape != blended.shape:
        raise IduError(
            f"editor returned {edited.shape} for viewpoint {v}, expected {blended.shape}",
            viewpoint=v)
    edited = np.clip(edited, 0.0, 1.0)
    try:
        mask = segmenter.segment(edited, view.mask)
    except Exception as exc:
        raise IduError(f"segmenter failed at viewpoint {v}: {exc}", viewpoint=v) from exc
    if mask.data.shape != blended.shape[:2]:
        raise IduError(
            f"segmenter returned {mask.data.shape} for viewpoint {v}, "
            f"expected {blended.shape[:2]}", viewpoint=v)
    view.current = apply_mask(edited, mask)
    view.mask = mask


def idu_run(field: VoxelField, dataset: IduDataset, editor: Editor,
            segmenter: Segmenter, schedule: IduSchedule, train_cfg: TrainConfig,
            instruction: Optional[EditInstruction] = None,
            on_outer_end: Optional[Callable[[int, VoxelField, IduDataset], None]] = None,
            log=None) -> Tuple[VoxelField, IduDataset]:
    """Run the iterative dataset update loop.

    Per outer iteration: shuffle viewpoints, run d edit rounds over the
    shuffled order (blend over black, edit conditioned on the blended
    original, re-segment, store), then n training steps sampling rays
    uniformly over the whole mixed dataset with random background colors.

    The viewpoint shuffle draws from schedule.rng_seed and training from
    train_cfg.rng_seed, so with an identity editor the field trace equals
    plain object training with the same config.
    """
    if not dataset.views:
        raise ValueError("empty dataset")
    if instruction is None:
        instruction = EditInstruction("keep the object unchanged")
    shuffle_rng = np.random.default_rng(normalize_seed(schedule.rng_seed))
    trainer = RayBatchTrainer(
        field, [v.camera for v in dataset.views],
        [v.current.rgb for v in dataset.views], train_cfg, "object",
        alphas=[v.current.alpha for v in dataset.views],
        near=dataset.near, far=dataset.far)
    step_index = 0
    for outer in range(schedule.outer_iterations):
        order = shuffle_rng.permutation(len(dataset.views))
        for _ in range(schedule.d):
            for v in order:
                view = dataset.views[int(v)]
                _edit_view(view, int(v), editor, segmenter, instruction)
                trainer.update_view_targets(int(v), view.current.rgb, view.current.alpha)
        for _ in range(schedule.n):
            loss, psnr = trainer.step()
            if log is not None:
                log.write(f"{step_index} {loss:.17g} {psnr:.6f}\n")
            step_index += 1
        if on_outer_end is not None:
            on_outer_end(outer, field, dataset)
    return field, dataset
