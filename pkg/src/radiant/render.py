"""Ray generation, stratified sampling, emission-absorption compositing,
and the depth-sorted merge of an object field with a background field.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .core import (
    SOURCE_BACKGROUND,
    SOURCE_OBJECT,
    Camera,
    Ray,
    RaySamples,
    SrtTransform,
    TrilinearStencil,
    VoxelField,
    srt_density_correction,
    srt_world_to_canonical,
)

TRANSPARENT = "transparent"

# below this accumulated opacity a pixel is treated as empty: its depth
# becomes the far sentinel and carries no gradient
EMPTY_ALPHA = 1e-4
_DEPTH_GUARD = 1e-6


def normalize_seed(seed: int) -> int:
    """Map an arbitrary 64-bit (possibly negative) seed to SeedSequence range."""
    return int(seed) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class RenderConfig:
    """Knobs for one render: sampling resolution, jitter, background, seed."""

    samples_per_ray: int = 64
    jitter: bool = False
    background: Union[Tuple[float, float, float], str] = (0.0, 0.0, 0.0)
    rng_seed: int = 0
    near: float = 0.5
    far: float = 5.0

    def __post_init__(self):
        if self.samples_per_ray < 2:
            raise ValueError("samples_per_ray must be >= 2")
        if isinstance(self.background, str):
            if self.background != TRANSPARENT:
                raise ValueError(f"background must be an rgb triple or '{TRANSPARENT}'")
        else:
            bg = tuple(float(c) for c in self.background)
            if len(bg) != 3 or min(bg) < 0.0 or max(bg) > 1.0:
                raise ValueError("background color channels must lie in [0, 1]")
            object.__setattr__(self, "background", bg)
        if not (0.0 <= self.near < self.far):
            raise ValueError("need 0 <= near < far")

    @property
    def background_array(self) -> Optional[np.ndarray]:
        if self.background == TRANSPARENT:
            return None
        return np.asarray(self.background, dtype=np.float64)


@dataclass
class RenderedView:
    """Per-pixel rgb, accumulated opacity, and alpha-weighted mean depth."""

    rgb: np.ndarray    # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    depth: np.ndarray  # (H, W)


def generate_ray(camera: Camera, px: int, py: int, *, near: float, far: float) -> Ray:
    """Ray through the center of pixel (px, py)."""
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px}, {py}) outside {camera.width}x{camera.height} image")
    d_cam = np.array([
        (px + 0.5 - camera.cx) / camera.fx,
        (py + 0.5 - camera.cy) / camera.fy,
        1.0,
    ])
    d_world = camera.rotation @ d_cam
    d_world /= np.linalg.norm(d_world)
    return Ray(camera.position, d_world, near, far)


def camera_ray_grid(camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions for every pixel, flattened row-major.

    Returns (origins (H*W, 3), directions (H*W, 3)).
    """
    xs = (np.arange(camera.width) + 0.5 - camera.cx) / camera.fx
    ys = (np.arange(camera.height) + 0.5 - camera.cy) / camera.fy
    gx, gy = np.meshgrid(xs, ys)  # (H, W)
    d_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1).reshape(-1, 3)
    d_world = d_cam @ camera.rotation.T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.position, d_world.shape).copy()
    return origins, d_world


def stratified_depths(n_rays: int, cfg: RenderConfig,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """(n_rays, N) sample depths: stratum centers, or jittered within strata."""
    n = cfg.samples_per_ray
    width = (cfg.far - cfg.near) / n
    base = cfg.near + np.arange(n, dtype=np.float64) * width
    if cfg.jitter:
        if rng is None:
            raise ValueError("jittered sampling needs an rng")
        offsets = rng.random((n_rays, n))
    else:
        offsets = np.full((n_rays, n), 0.5)
    return base[None, :] + offsets * width


def depth_deltas(depths: np.ndarray, stratum_width) -> np.ndarray:
    """Per-sample segment lengths: t_{i+1} - t_i, last sample gets the stratum width.

    stratum_width may be a scalar or a per-ray array broadcastable to the
    leading depth dimensions.
    """
    width = np.broadcast_to(np.asarray(stratum_width, dtype=np.float64)[..., None],
                            depths.shape[:-1] + (1,))
    return np.concatenate([np.diff(depths, axis=-1), width], axis=-1)


def sample_along_ray(ray: Ray, cfg: RenderConfig) -> RaySamples:
    """Stratified samples along one ray; densities and colors left at zero."""
    if not np.isfinite(ray.far):
        raise ValueError("sampling requires a finite far bound")
    n = cfg.samples_per_ray
    width = (ray.far - ray.near) / n
    base = ray.near + np.arange(n, dtype=np.float64) * width
    if cfg.jitter:
        offsets = np.random.default_rng(normalize_seed(cfg.rng_seed)).random(n)
    else:
        offsets = np.full(n, 0.5)
    t = base + offsets * width
    delta = depth_deltas(t[None, :], width)[0]
    return RaySamples(t, delta, np.zeros(n), np.zeros((n, 3)),
                      np.full(n, SOURCE_OBJECT, dtype=np.uint8), ray.near, ray.far)


def composite_batch(depth: np.ndarray, delta: np.ndarray, sigma: np.ndarray,
                    rgb: np.ndarray, background: Optional[np.ndarray],
                    far: float):
    """Front-to-back emission-absorption over (R, N) sorted sample batches.

    Returns (rgb (R, 3), alpha (R,), depth (R,), residual transmittance (R,)).
    """
    trans_after = np.cumprod(np.exp(-sigma * delta), axis=-1)  # T_{i+1}
    trans_before = np.concatenate(
        [np.ones(depth.shape[:-1] + (1,)), trans_after[..., :-1]], axis=-1)
    weights = trans_before - trans_after  # T_i * alpha_i, computed stably
    acc_alpha = weights.sum(axis=-1)
    out_rgb = (weights[..., None] * rgb).sum(axis=-2)
    if background is not None:
        out_rgb = out_rgb + (1.0 - acc_alpha)[..., None] * background
    depth_sum = (weights * depth).sum(axis=-1)
    out_depth = np.where(acc_alpha < EMPTY_ALPHA, far,
                         depth_sum / np.maximum(acc_alpha, _DEPTH_GUARD))
    return out_rgb, acc_alpha, out_depth, trans_after[..., -1]


def composite_ray(samples: RaySamples, background):
    """Composite one sorted sample list. Returns (rgb (3,), alpha, depth)."""
    assert samples.is_sorted(), "composite_ray requires depth-sorted samples"
    assert len(samples) == 0 or samples.delta.min() > 0.0
    if isinstance(background, str):
        if background != TRANSPARENT:
            raise ValueError(f"background must be an rgb triple or '{TRANSPARENT}'")
        background = None
    elif background is not None:
        background = np.asarray(background, dtype=np.float64)
    rgb, alpha, depth, _ = composite_batch(
        samples.depth[None], samples.delta[None], samples.density[None],
        samples.color[None], background, samples.far)
    return rgb[0], float(alpha[0]), float(depth[0])


def field_sample_rng(field: VoxelField, cfg: RenderConfig) -> np.random.Generator:
    """Jitter stream keyed by (seed, field content).

    Keying on content rather than argument position makes the sample set
    follow the field: merged renders are symmetric under swapping the two
    fields, and a single-field render draws the same depths as the same
    field inside a merge.
    """
    words = np.frombuffer(field.fingerprint(), dtype=np.uint32)
    ss = np.random.SeedSequence([normalize_seed(cfg.rng_seed)] + [int(w) for w in words])
    return np.random.default_rng(ss)


def _view_shape(camera: Camera, rgb, alpha, depth) -> RenderedView:
    h, w = camera.height, camera.width
    return RenderedView(rgb.reshape(h, w, 3), alpha.reshape(h, w), depth.reshape(h, w))


def render_view(field: VoxelField, camera: Camera, cfg: RenderConfig) -> RenderedView:
    """Render one field from one camera."""
    origins, dirs = camera_ray_grid(camera)
    rng = field_sample_rng(field, cfg) if cfg.jitter else None
    t = stratified_depths(origins.shape[0], cfg, rng)
    width = (cfg.far - cfg.near) / cfg.samples_per_ray
    delta = depth_deltas(t, width)
    points = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    sigma, color = TrilinearStencil(field, points).gather(field)
    rgb, alpha, depth, _ = composite_batch(t, delta, sigma, color,
                                           cfg.background_array, cfg.far)
    return _view_shape(camera, rgb, alpha, depth)


def object_centroid(field: VoxelField) -> np.ndarray:
    """Density-weighted mean of voxel-center positions."""
    total = field.density.sum()
    if total <= 0.0:
        raise ValueError("empty object field")
    out = np.empty(3)
    sum_axes = [(1, 2), (0, 2), (0, 1)]
    for axis in range(3):
        marginal = field.density.sum(axis=sum_axes[axis])
        out[axis] = marginal @ field.axis_centers(axis) / total
    return out


def merge_samples(object_samples: RaySamples, background_samples: RaySamples) -> RaySamples:
    """Depth-sorted union of two sample sets; ties break background-first."""
    depth = np.concatenate([background_samples.depth, object_samples.depth])
    delta = np.concatenate([background_samples.delta, object_samples.delta])
    density = np.concatenate([background_samples.density, object_samples.density])
    color = np.concatenate([background_samples.color, object_samples.color])
    source = np.concatenate([
        np.full(len(background_samples), SOURCE_BACKGROUND, dtype=np.uint8),
        np.full(len(object_samples), SOURCE_OBJECT, dtype=np.uint8),
    ])
    near = min(object_samples.near, background_samples.near)
    far = max(object_samples.far, background_samples.far)
    return RaySamples(depth, delta, density, color, source, near, far).sorted_by_depth()


def render_merged(object_field: VoxelField, bkg_field: VoxelField,
                  transform: Optional[SrtTransform], camera: Camera,
                  cfg: RenderConfig) -> RenderedView:
    """Render two fields along shared rays via a depth-sorted sample union.

    Object samples are evaluated in the object's canonical frame through
    the SRT transform (with the 1/scale density correction); each field
    keeps the deltas from its own stratified draw. The sort is stable
    with background samples first at exactly-equal depths.
    """
    origins, dirs = camera_ray_grid(camera)
    n_rays = origins.shape[0]
    rng_obj = field_sample_rng(object_field, cfg) if cfg.jitter else None
    rng_bkg = field_sample_rng(bkg_field, cfg) if cfg.jitter else None
    t_obj = stratified_depths(n_rays, cfg, rng_obj)
    t_bkg = stratified_depths(n_rays, cfg, rng_bkg)
    width = (cfg.far - cfg.near) / cfg.samples_per_ray

    points_obj = origins[:, None, :] + t_obj[..., None] * dirs[:, None, :]
    if transform is not None and not transform.is_identity():
        query_points = srt_world_to_canonical(points_obj, transform)
        correction = srt_density_correction(transform)
    else:
        query_points = points_obj
        correction = None
    sigma_obj, color_obj = TrilinearStencil(object_field, query_points).gather(object_field)
    if correction is not None:
        sigma_obj *= correction

    points_bkg = origins[:, None, :] + t_bkg[..., None] * dirs[:, None, :]
    sigma_bkg, color_bkg = TrilinearStencil(bkg_field, points_bkg).gather(bkg_field)

    # background first so the stable sort breaks depth ties background-first
    depth = np.concatenate([t_bkg, t_obj], axis=1)
    delta = np.concatenate([depth_deltas(t_bkg, width), depth_deltas(t_obj, width)], axis=1)
    sigma = np.concatenate([sigma_bkg, sigma_obj], axis=1)
    color = np.concatenate([color_bkg, color_obj], axis=1)
    order = np.argsort(depth, axis=1, kind="stable")
    depth = np.take_along_axis(depth, order, axis=1)
    delta = np.take_along_axis(delta, order, axis=1)
    sigma = np.take_along_axis(sigma, order, axis=1)
    color = np.take_along_axis(color, order[..., None], axis=1)

    rgb, alpha, out_depth, _ = composite_batch(depth, delta, sigma, color,
                                               cfg.background_array, cfg.far)
    return _view_shape(camera, rgb, alpha, out_depth)
