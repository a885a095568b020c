"""Synthetic scenes with exact ground truth (object / background / full
fields, masks, depths), camera rigs, the oracle inpainter, and metrics.
"""
from __future__ import annotations

from dataclasses import dataclass, field as _dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Camera, MaskImage, VoxelField, as_vec3
from .optim import psnr_from_mse
from .render import RenderConfig, RenderedView, render_view

ROLE_OBJECT = "object"
ROLE_BACKGROUND = "background"

# density painted inside primitives; near-opaque over a few voxels at
# desk-scale grid resolutions
SIGMA_MAX = 50.0

# color assigned to unoccupied voxels in all ground-truth grids; shared
# across the three fields so their edge blends agree
EMPTY_COLOR = (0.5, 0.5, 0.5)


@dataclass
class Primitive:
    shape: str          # "sphere" | "box"
    center: Tuple[float, float, float]
    size: object        # radius for spheres, half-extents (3,) for boxes
    color: Tuple[float, float, float]
    role: str           # "object" | "background"

    def __post_init__(self):
        if self.shape not in ("sphere", "box"):
            raise ValueError(f"unknown primitive shape {self.shape!r}")
        if self.role not in (ROLE_OBJECT, ROLE_BACKGROUND):
            raise ValueError(f"unknown primitive role {self.role!r}")
        self.center = tuple(float(c) for c in self.center)
        if self.shape == "sphere":
            self.size = float(self.size)
            if self.size <= 0:
                raise ValueError("sphere radius must be positive")
        else:
            half = np.asarray(self.size, dtype=np.float64)
            if half.shape != (3,) or np.any(half <= 0):
                raise ValueError("box size must be positive half-extents (3,)")
            self.size = tuple(float(h) for h in half)
        self.color = tuple(float(c) for c in self.color)

    def extent(self) -> Tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        if self.shape == "sphere":
            half = np.full(3, self.size)
        else:
            half = np.asarray(self.size)
        return c - half, c + half


@dataclass
class GroundPlane:
    """Checkerboard slab spanning the scene bounds in x/z (y is down)."""

    enabled: bool = True
    y: float = 0.75
    thickness: float = 0.3
    color_a: Tuple[float, float, float] = (0.82, 0.82, 0.8)
    color_b: Tuple[float, float, float] = (0.2, 0.25, 0.4)
    checker_size: float = 0.4


@dataclass
class CameraRig:
    """Orbit of pinhole cameras around a look-at point (world y is down)."""

    count: int = 24
    radius: float = 2.2
    height: float = 0.9          # elevation above the look-at point
    look_at: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    image_width: int = 64
    image_height: int = 64
    fov_deg: float = 55.0
    near: float = 0.5
    far: float = 5.0


@dataclass
class SceneSpec:
    primitives: List[Primitive] = _dc_field(default_factory=list)
    ground_plane: GroundPlane = _dc_field(default_factory=GroundPlane)
    resolution: Tuple[int, int, int] = (96, 96, 96)
    bounds_min: Tuple[float, float, float] = (-1.2, -1.2, -1.2)
    bounds_max: Tuple[float, float, float] = (1.2, 1.2, 1.2)
    rig: CameraRig = _dc_field(default_factory=CameraRig)
    background_color: Tuple[float, float, float] = (0.04, 0.05, 0.08)
    samples_per_ray: int = 128
    heldout_count: int = 8

    def __post_init__(self):
        if not any(p.role == ROLE_OBJECT for p in self.primitives):
            raise ValueError("scene needs at least one object primitive")
        if not (any(p.role == ROLE_BACKGROUND for p in self.primitives)
                or self.ground_plane.enabled):
            raise ValueError("scene needs at least one background element")
        if self.rig.count <= 3:
            raise ValueError("camera rig needs more than 3 views")

    @classmethod
    def default(cls) -> "SceneSpec":
        return cls(primitives=[
            Primitive("sphere", (0.0, -0.05, 0.0), 0.38, (0.85, 0.16, 0.12), ROLE_OBJECT),
            Primitive("box", (-0.72, 0.42, 0.55), (0.2, 0.32, 0.2), (0.15, 0.55, 0.2), ROLE_BACKGROUND),
            Primitive("box", (0.7, 0.5, -0.5), (0.22, 0.24, 0.22), (0.2, 0.3, 0.75), ROLE_BACKGROUND),
        ])

    def render_config(self, background=None, **overrides) -> RenderConfig:
        kwargs = dict(samples_per_ray=self.samples_per_ray, jitter=False,
                      background=self.background_color if background is None else background,
                      rng_seed=0, near=self.rig.near, far=self.rig.far)
        kwargs.update(overrides)
        return RenderConfig(**kwargs)


@dataclass
class SceneFields:
    full: VoxelField
    object: VoxelField
    background: VoxelField


def generate_scene(spec: SceneSpec, seed: int = 0) -> SceneFields:
    """Rasterize the scene spec into full / object-only / background-only grids.

    Voxels inside a primitive get density SIGMA_MAX and its color; colors
    are additionally painted one voxel beyond the density support so the
    trilinear ramp at a surface blends within the primitive's own color
    instead of washing toward the empty-voxel grey. The full grid is the
    voxelwise union (max density, color of the densest contributor; the
    primitives are spatially disjoint by construction). seed is accepted
    for interface stability; rasterization itself is exact.
    """
    bmin = as_vec3(spec.bounds_min, "bounds_min")
    bmax = as_vec3(spec.bounds_max, "bounds_max")
    res = tuple(int(n) for n in spec.resolution)
    probe = VoxelField.zeros(res, bmin, bmax)
    xs = probe.axis_centers(0)[:, None, None]
    ys = probe.axis_centers(1)[None, :, None]
    zs = probe.axis_centers(2)[None, None, :]
    margin = probe.voxel_size

    def sphere_mask(prim: Primitive, pad: np.ndarray):
        cx, cy, cz = prim.center
        r = prim.size + pad.max()
        return (xs - cx) ** 2 + (ys - cy) ** 2 + (zs - cz) ** 2 <= r * r

    def box_mask(prim: Primitive, pad: np.ndarray):
        cx, cy, cz = prim.center
        hx, hy, hz = prim.size
        return ((np.abs(xs - cx) <= hx + pad[0]) & (np.abs(ys - cy) <= hy + pad[1])
                & (np.abs(zs - cz) <= hz + pad[2]))

    def paint_primitive(target: VoxelField, prim: Primitive):
        mask_fn = sphere_mask if prim.shape == "sphere" else box_mask
        target.color[mask_fn(prim, margin)] = np.asarray(prim.color)
        target.density[mask_fn(prim, np.zeros(3))] = SIGMA_MAX
        target.note_mutation()

    def paint_plane(target: VoxelField, plane: GroundPlane):
        parity = (np.floor(xs / plane.checker_size) + np.floor(zs / plane.checker_size)) % 2
        checker = np.where((parity == 0)[..., None],
                           np.asarray(plane.color_a), np.asarray(plane.color_b))
        slab = (ys >= plane.y - margin[1]) & (ys <= plane.y + plane.thickness + margin[1])
        sel = np.broadcast_to(slab, res)
        target.color[sel] = np.broadcast_to(checker, res + (3,))[sel]
        slab = (ys >= plane.y) & (ys <= plane.y + plane.thickness)
        target.density[np.broadcast_to(slab, res)] = SIGMA_MAX
        target.note_mutation()

    fields = {
        ROLE_OBJECT: VoxelField.constant(res, bmin, bmax, 0.0, EMPTY_COLOR),
        ROLE_BACKGROUND: VoxelField.constant(res, bmin, bmax, 0.0, EMPTY_COLOR),
    }
    full = VoxelField.constant(res, bmin, bmax, 0.0, EMPTY_COLOR)

    for i, prim in enumerate(spec.primitives):
        lo, hi = prim.extent()
        if np.any(lo < bmin) or np.any(hi > bmax):
            raise ValueError(f"primitive {i} ({prim.shape}) extends outside scene bounds")
        paint_primitive(fields[prim.role], prim)
        paint_primitive(full, prim)
    if spec.ground_plane.enabled:
        paint_plane(fields[ROLE_BACKGROUND], spec.ground_plane)
        paint_plane(full, spec.ground_plane)
    return SceneFields(full=full, object=fields[ROLE_OBJECT],
                       background=fields[ROLE_BACKGROUND])


def _look_at_camera(position, look_at, rig: CameraRig) -> Camera:
    pos = as_vec3(position)
    target = as_vec3(look_at)
    forward = target - pos
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, -1.0, 0.0])  # world up for a y-down frame
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("camera looks straight along the vertical axis")
    right /= norm
    down = np.cross(forward, right)
    c2w = np.eye(4)
    c2w[:3, 0] = right
    c2w[:3, 1] = down
    c2w[:3, 2] = forward
    c2w[:3, 3] = pos
    focal = (rig.image_width / 2.0) / np.tan(np.deg2rad(rig.fov_deg) / 2.0)
    return Camera(focal, focal, rig.image_width / 2.0, rig.image_height / 2.0,
                  rig.image_width, rig.image_height, c2w)


def orbit_cameras(rig: CameraRig, count: Optional[int] = None,
                  azimuth_offset: float = 0.0) -> List[Camera]:
    """Evenly spaced orbit cameras looking at the rig's target point."""
    count = rig.count if count is None else count
    look = np.asarray(rig.look_at, dtype=np.float64)
    cams = []
    for k in range(count):
        theta = 2.0 * np.pi * k / count + azimuth_offset
        pos = look + np.array([rig.radius * np.cos(theta),
                               -rig.height,
                               rig.radius * np.sin(theta)])
        cams.append(_look_at_camera(pos, look, rig))
    return cams


def heldout_cameras(spec: SceneSpec) -> List[Camera]:
    """Views between the training azimuths, for held-out evaluation."""
    return orbit_cameras(spec.rig, count=spec.heldout_count,
                         azimuth_offset=np.pi / spec.rig.count)


@dataclass
class ViewData:
    """One dataset view: image, camera, and optional mask / depth."""

    camera: Camera
    rgb: np.ndarray                      # (H, W, 3)
    alpha: Optional[np.ndarray] = None   # (H, W)
    mask: Optional[MaskImage] = None
    depth: Optional[np.ndarray] = None   # (H, W)
    depth_valid: Optional[np.ndarray] = None  # (H, W) bool


@dataclass
class MultiViewDataset:
    """Per-view images + cameras with shared scene metadata."""

    views: List[ViewData]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    near: float
    far: float
    background_color: Optional[Tuple[float, float, float]] = None
    samples_per_ray: int = 128

    def __post_init__(self):
        self.bounds_min = as_vec3(self.bounds_min, "bounds_min")
        self.bounds_max = as_vec3(self.bounds_max, "bounds_max")
        for i, v in enumerate(self.views):
            h, w = v.rgb.shape[:2]
            if (w, h) != (v.camera.width, v.camera.height):
                raise ValueError(f"view {i}: image {w}x{h} does not match its camera")

    def __len__(self) -> int:
        return len(self.views)


def mask_from_alpha(alpha: np.ndarray, threshold: float = 0.5) -> MaskImage:
    """Binary object mask: pixels whose opacity exceeds the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return MaskImage(np.asarray(alpha) > threshold)


def straight_alpha_object_image(view: RenderedView, mask: MaskImage) -> Tuple[np.ndarray, np.ndarray]:
    """Canonical RGBA for object training: binary alpha, rgb zeroed outside.

    The transparent render gives weight-premultiplied rgb; un-premultiply
    inside the mask so alpha-blending the stored image over black is an
    exact round trip.
    """
    m = mask.as_float()
    rgb = view.rgb / np.maximum(view.alpha, 1e-6)[..., None]
    rgb = np.clip(rgb, 0.0, 1.0) * m[..., None]
    return rgb, m


def render_dataset(fields: SceneFields, cameras: Sequence[Camera], spec: SceneSpec,
                   which: str = "full", mask_threshold: float = 0.5) -> MultiViewDataset:
    """Render a ground-truth dataset variant from the scene fields.

    which selects the image/depth source: "full" and "background" give RGB
    over the scene background color, "object" gives canonical RGBA over
    transparent. Masks always come from the object field's opacity.
    """
    if which not in ("full", "object", "background"):
        raise ValueError(f"unknown dataset variant {which!r}")
    source = getattr(fields, which)
    cfg_mask = spec.render_config(background="transparent")
    cfg_img = cfg_mask if which == "object" else spec.render_config()
    views = []
    for cam in cameras:
        rendered = render_view(source, cam, cfg_img)
        mask_view = rendered if which == "object" else render_view(fields.object, cam, cfg_mask)
        mask = mask_from_alpha(mask_view.alpha, mask_threshold)
        if which == "object":
            rgb, alpha = straight_alpha_object_image(rendered, mask)
            depth_valid = mask.data.copy()
        else:
            rgb, alpha = rendered.rgb, rendered.alpha
            depth_valid = rendered.alpha > 0.5
        views.append(ViewData(camera=cam, rgb=rgb, alpha=alpha, mask=mask,
                              depth=rendered.depth, depth_valid=depth_valid))
    return MultiViewDataset(
        views, np.asarray(spec.bounds_min), np.asarray(spec.bounds_max),
        spec.rig.near, spec.rig.far,
        background_color=None if which == "object" else spec.background_color,
        samples_per_ray=spec.samples_per_ray)


def oracle_inpaint(view_index: int, dataset: MultiViewDataset,
                   gt_background: VoxelField) -> np.ndarray:
    """Perfect inpainting of one view: the true background render."""
    if not 0 <= view_index < len(dataset.views):
        raise ValueError(f"view {view_index} out of range")
    bg = dataset.background_color if dataset.background_color is not None else (0.0, 0.0, 0.0)
    cfg = RenderConfig(samples_per_ray=dataset.samples_per_ray, jitter=False,
                       background=tuple(bg), rng_seed=0,
                       near=dataset.near, far=dataset.far)
    return render_view(gt_background, dataset.views[view_index].camera, cfg).rgb


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between unit-range images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return psnr_from_mse(float(np.mean((a - b) ** 2)))


def leakage(alpha: np.ndarray, gt_mask: MaskImage) -> float:
    """Mean rendered opacity outside the ground-truth object mask."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != gt_mask.data.shape:
        raise ValueError(f"shapes differ: {alpha.shape} vs {gt_mask.data.shape}")
    outside = ~gt_mask.data
    if not outside.any():
        raise ValueError("no background pixels")
    return float(alpha[outside].mean())


def mask_iou(a: MaskImage, b: MaskImage) -> float:
    """Intersection-over-union of two binary masks (1.0 when both empty)."""
    inter = np.logical_and(a.data, b.data).sum()
    union = np.logical_or(a.data, b.data).sum()
    if union == 0:
        return 1.0
    return float(inter) / float(union)
