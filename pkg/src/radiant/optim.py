"""Losses, analytic gradients of the volume render w.r.t. voxel parameters,
Adam, and the object / background field training loops.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .core import TrilinearStencil, VoxelField
from .render import (
    EMPTY_ALPHA,
    RenderConfig,
    camera_ray_grid,
    composite_batch,
    depth_deltas,
    normalize_seed,
    stratified_depths,
)


class DivergenceError(RuntimeError):
    """Raised when training produces a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    """Knobs for fitting a voxel field to a multi-view dataset."""

    iterations: int = 800
    rays_per_batch: int = 4096
    learning_rate: float = 0.15
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    depth_loss_weight: float = 0.0
    rng_seed: int = 0
    samples_per_ray: int = 96

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.rays_per_batch <= 0:
            raise ValueError("rays_per_batch must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0.0 <= b < 1.0:
                raise ValueError("adam betas must lie in [0, 1)")
        if self.depth_loss_weight < 0.0:
            raise ValueError("depth_loss_weight must be >= 0")
        if self.samples_per_ray < 2:
            raise ValueError("samples_per_ray must be >= 2")


@dataclass
class FieldGradients:
    """Loss gradients shaped like the voxel parameters."""

    density: np.ndarray  # (nx, ny, nz)
    color: np.ndarray    # (nx, ny, nz, 3)

    @classmethod
    def zeros(cls, field: VoxelField) -> "FieldGradients":
        return cls(np.zeros(field.resolution),
                   np.zeros(field.resolution + (3,)))


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter."""

    m_density: np.ndarray
    v_density: np.ndarray
    m_color: np.ndarray
    v_color: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, field: VoxelField) -> "AdamState":
        return cls(np.zeros(field.resolution), np.zeros(field.resolution),
                   np.zeros(field.resolution + (3,)), np.zeros(field.resolution + (3,)))


def blended_photometric_loss(pred_rgb, pred_alpha, target, bg) -> float:
    """Squared error between a render over bg and the target blended over bg.

    target is an rgba pixel; pred_rgb must already be composited over bg.
    """
    pred_rgb = np.asarray(pred_rgb, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    t_alpha = target[..., 3]
    blended = t_alpha[..., None] * target[..., :3] + (1.0 - t_alpha)[..., None] * bg
    err = pred_rgb - blended
    return float(np.mean(err * err))


def depth_loss(pred_depth: float, true_depth: float, valid: bool) -> float:
    """Squared depth error on valid pixels, zero otherwise."""
    if not valid:
        return 0.0
    d = float(pred_depth) - float(true_depth)
    return d * d


def ray_box_spans(origins, dirs, bounds_min, bounds_max, near, far):
    """Per-ray [enter, exit] of the field's bounding box, clamped to [near, far].

    Rays that miss the box get a tiny span at near so they still composite
    (to pure background, with zero field gradient).
    """
    d = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
    t1 = (bounds_min - origins) / d
    t2 = (bounds_max - origins) / d
    enter = np.maximum(np.minimum(t1, t2).max(axis=-1), near)
    exit_ = np.minimum(np.maximum(t1, t2).min(axis=-1), far)
    miss = exit_ <= enter
    enter = np.where(miss, near, enter)
    exit_ = np.where(miss, near + (far - near) * 1e-3, exit_)
    return enter, exit_


def composite_gradients(depth, delta, sigma, rgb, g_rgb, g_alpha, g_depth, far):
    """Exact gradients of the compositing recurrence for (R, N) batches.

    Upstream gradients are w.r.t. the transparent-compositing outputs
    (raw rgb sum, accumulated alpha, depth). A background term in the
    forward is handled by folding -g_rgb . bg into g_alpha.
    Returns (d_sigma (R, N), d_rgb (R, N, 3)).
    """
    trans_after = np.cumprod(np.exp(-sigma * delta), axis=-1)
    trans_before = np.concatenate(
        [np.ones(depth.shape[:-1] + (1,)), trans_after[..., :-1]], axis=-1)
    weights = trans_before - trans_after
    acc_alpha = weights.sum(axis=-1)
    depth_sum = (weights * depth).sum(axis=-1)

    valid = acc_alpha >= EMPTY_ALPHA
    safe_alpha = np.where(valid, np.maximum(acc_alpha, 1e-6), 1.0)
    depth_out = depth_sum / safe_alpha

    # dL/dw_i
    u = (rgb * g_rgb[..., None, :]).sum(axis=-1) + g_alpha[..., None]
    g_d = np.where(valid, g_depth, 0.0)
    u = u + (g_d / safe_alpha)[..., None] * (depth - depth_out[..., None])

    d_rgb = weights[..., None] * g_rgb[..., None, :]
    wu = weights * u
    # Q_i = sum_{j>i} w_j u_j via a reversed cumulative sum
    suffix = np.flip(np.cumsum(np.flip(wu, axis=-1), axis=-1), axis=-1)
    q = suffix - wu
    d_sigma = delta * (trans_after * u - q)
    return d_sigma, d_rgb


def backprop_ray(samples, upstream) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample (d_sigma, d_color) for one ray.

    upstream = (g_rgb (3,), g_alpha, g_depth), gradients of the loss
    w.r.t. the transparent composite outputs of this ray.
    """
    g_rgb, g_alpha, g_depth = upstream
    g_rgb = np.asarray(g_rgb, dtype=np.float64)
    d_sigma, d_rgb = composite_gradients(
        samples.depth[None], samples.delta[None], samples.density[None],
        samples.color[None], g_rgb[None], np.array([float(g_alpha)]),
        np.array([float(g_depth)]), samples.far)
    return d_sigma[0], d_rgb[0]


def adam_step(field: VoxelField, grads: FieldGradients, state: AdamState,
              cfg: TrainConfig) -> Tuple[VoxelField, AdamState]:
    """Bias-corrected Adam update in place, then clamp to field invariants."""
    if not (np.isfinite(grads.density).all() and np.isfinite(grads.color).all()):
        raise DivergenceError("divergence")
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in ((field.density, grads.density, state.m_density, state.v_density),
                       (field.color, grads.color, state.m_color, state.v_color)):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        sq = np.square(g)
        sq *= (1.0 - b2)
        v += sq
        denom = np.sqrt(v)
        denom *= 1.0 / np.sqrt(c2)
        denom += cfg.adam_eps
        update = m * (cfg.learning_rate / c1)
        update /= denom
        p -= update
    np.clip(field.density, 0.0, None, out=field.density)
    np.clip(field.color, 0.0, 1.0, out=field.color)
    field.note_mutation()
    return field, state


class RayBatchTrainer:
    """Shared minibatch trainer over precomputed per-view ray sets.

    mode "object": targets are straight-alpha RGBA images blended per
    batch over a fresh random background color. mode "background":
    targets are RGB images over a fixed color plus optional true depth.

    RNG consumption per step is fixed (ray indices, background color,
    sample jitter) so identical seeds give identical traces.
    """

    def __init__(self, field: VoxelField, cameras: Sequence, images_rgb: Sequence[np.ndarray],
                 cfg: TrainConfig, mode: str, *, alphas: Optional[Sequence[np.ndarray]] = None,
                 depths: Optional[Sequence[Optional[np.ndarray]]] = None,
                 depth_valids: Optional[Sequence[Optional[np.ndarray]]] = None,
                 near: float, far: float,
                 background_color=(0.0, 0.0, 0.0),
                 fixed_background=None,
                 rng: Optional[np.random.Generator] = None):
        if mode not in ("object", "background"):
            raise ValueError(f"unknown trainer mode {mode!r}")
        if not cameras:
            raise ValueError("empty dataset")
        self.field = field
        self.cfg = cfg
        self.mode = mode
        self.near = float(near)
        self.far = float(far)
        self.bg_fixed = np.asarray(background_color, dtype=np.float64)
        # object mode normally draws a random background per batch; a fixed
        # color here reproduces training without the random-background trick
        self.object_fixed_bg = None if fixed_background is None else \
            np.asarray(fixed_background, dtype=np.float64)
        self.rng = rng if rng is not None else np.random.default_rng(normalize_seed(cfg.rng_seed))
        self.state = AdamState.zeros(field)

        origins, dirs, starts = [], [], []
        total = 0
        for cam in cameras:
            o, d = camera_ray_grid(cam)
            origins.append(o)
            dirs.append(d)
            starts.append(total)
            total += o.shape[0]
        self.origins = np.concatenate(origins, axis=0)
        self.dirs = np.concatenate(dirs, axis=0)
        self.view_starts = starts
        self.n_rays = total
        # sampling is restricted to each ray's field-bounds span: samples
        # beyond it contribute nothing, so the loss and gradients are
        # unchanged while every stratum lands where the field can vary
        self.t_enter, self.t_exit = ray_box_spans(
            self.origins, self.dirs, field.bounds_min, field.bounds_max,
            self.near, self.far)

        self.t_rgb = np.concatenate([img.reshape(-1, 3) for img in images_rgb], axis=0)
        if mode == "object":
            if alphas is None:
                raise ValueError("object training requires alpha targets")
            self.t_alpha = np.concatenate([a.reshape(-1) for a in alphas], axis=0)
        else:
            self.t_alpha = None
            zeros = np.zeros(cameras[0].height * cameras[0].width)
            dep_cols, val_cols = [], []
            for i in range(len(cameras)):
                dep = depths[i] if depths is not None else None
                val = depth_valids[i] if depth_valids is not None else None
                if dep is None:
                    dep_cols.append(zeros)
                    val_cols.append(np.zeros_like(zeros, dtype=bool))
                else:
                    dep_cols.append(np.asarray(dep, dtype=np.float64).reshape(-1))
                    if val is None:
                        val = np.ones(dep_cols[-1].shape, dtype=bool)
                    val_cols.append(np.asarray(val, dtype=bool).reshape(-1))
            self.t_depth = np.concatenate(dep_cols, axis=0)
            self.t_valid = np.concatenate(val_cols, axis=0)

    def update_view_targets(self, view_index: int, rgb: np.ndarray,
                            alpha: Optional[np.ndarray] = None):
        """Refresh one view's targets after its image was edited in place."""
        start = self.view_starts[view_index]
        n = rgb.shape[0] * rgb.shape[1]
        self.t_rgb[start:start + n] = rgb.reshape(-1, 3)
        if alpha is not None and self.t_alpha is not None:
            self.t_alpha[start:start + n] = alpha.reshape(-1)

    def step(self) -> Tuple[float, float]:
        """One minibatch forward/backward/Adam step. Returns (loss, psnr)."""
        cfg = self.cfg
        batch = cfg.rays_per_batch
        n = cfg.samples_per_ray
        idx = self.rng.integers(0, self.n_rays, size=batch)
        if self.mode == "object":
            bg = self.rng.random(3) if self.object_fixed_bg is None else self.object_fixed_bg
        else:
            bg = self.bg_fixed
        offsets = self.rng.random((batch, n))

        enter = self.t_enter[idx]
        width = (self.t_exit[idx] - enter) / n
        t = enter[:, None] + (np.arange(n, dtype=np.float64)[None, :] + offsets) * width[:, None]
        delta = depth_deltas(t, width)
        o = self.origins[idx]
        d = self.dirs[idx]
        points = o[:, None, :] + t[..., None] * d[:, None, :]
        stencil = TrilinearStencil(self.field, points)
        sigma, color = stencil.gather(self.field)
        pred_rgb, acc_alpha, pred_depth, _ = composite_batch(t, delta, sigma, color, bg, self.far)

        if self.mode == "object":
            ta = self.t_alpha[idx][:, None]
            target = ta * self.t_rgb[idx] + (1.0 - ta) * bg
            resid = pred_rgb - target
            loss = float(np.mean(resid * resid))
            g_rgb = (2.0 / resid.size) * resid
            g_depth = np.zeros(batch)
        else:
            resid = pred_rgb - self.t_rgb[idx]
            loss = float(np.mean(resid * resid))
            g_rgb = (2.0 / resid.size) * resid
            valid = self.t_valid[idx]
            n_valid = max(int(valid.sum()), 1)
            resid_d = np.where(valid, pred_depth - self.t_depth[idx], 0.0)
            loss += cfg.depth_loss_weight * float((resid_d * resid_d).sum()) / n_valid
            g_depth = (2.0 * cfg.depth_loss_weight / n_valid) * resid_d
        if not np.isfinite(loss):
            raise DivergenceError("divergence")

        # fold the background term of the forward into the alpha gradient
        g_alpha = -(g_rgb @ bg)
        d_sigma, d_color = composite_gradients(t, delta, sigma, color, g_rgb, g_alpha,
                                               g_depth, self.far)
        grads = FieldGradients.zeros(self.field)
        stencil.scatter(d_sigma, d_color,
                        grads.density.reshape(-1), grads.color.reshape(-1, 3))
        adam_step(self.field, grads, self.state, cfg)
        return loss, psnr_from_mse(loss)


def psnr_from_mse(mse: float) -> float:
    """PSNR in dB for unit-range images, capped at 99."""
    if mse < 1e-10:
        return 99.0
    return min(10.0 * np.log10(1.0 / mse), 99.0)


def _write_log(log: Optional[TextIO], iteration: int, loss: float, psnr: float):
    if log is not None:
        log.write(f"{iteration} {loss:.17g} {psnr:.6f}\n")


def train_object_field(dataset, cfg: TrainConfig, *, field: Optional[VoxelField] = None,
                       resolution=(96, 96, 96), log: Optional[TextIO] = None,
                       fixed_background=None) -> VoxelField:
    """Fit an object field to RGBA views using random background colors.

    Each batch blends both the render and the RGBA targets over a fresh
    random color so stray density outside the object is penalized from
    every direction. Passing fixed_background disables the trick (for
    ablation) and blends everything over that constant color instead.
    """
    if not dataset.views:
        raise ValueError("empty dataset")
    for i, view in enumerate(dataset.views):
        if view.alpha is None:
            raise ValueError(f"object training requires RGBA images (view {i} has no alpha)")
    if field is None:
        field = VoxelField.constant(resolution, dataset.bounds_min, dataset.bounds_max)
    trainer = RayBatchTrainer(
        field, [v.camera for v in dataset.views], [v.rgb for v in dataset.views],
        cfg, "object", alphas=[v.alpha for v in dataset.views],
        near=dataset.near, far=dataset.far, fixed_background=fixed_background)
    for i in range(cfg.iterations):
        loss, psnr = trainer.step()
        _write_log(log, i, loss, psnr)
    return field


def train_background_field(dataset, cfg: TrainConfig, *, field: Optional[VoxelField] = None,
                           resolution=(96, 96, 96), log: Optional[TextIO] = None) -> VoxelField:
    """Fit a background field to inpainted RGB views plus optional true depth."""
    if not dataset.views:
        raise ValueError("empty dataset")
    if field is None:
        field = VoxelField.constant(resolution, dataset.bounds_min, dataset.bounds_max)
    bg = dataset.background_color if dataset.background_color is not None else (0.0, 0.0, 0.0)
    trainer = RayBatchTrainer(
        field, [v.camera for v in dataset.views], [v.rgb for v in dataset.views],
        cfg, "background",
        depths=[v.depth for v in dataset.views],
        depth_valids=[v.depth_valid for v in dataset.views],
        near=dataset.near, far=dataset.far, background_color=bg)
    for i in range(cfg.iterations):
        loss, psnr = trainer.step()
        _write_log(log, i, loss, psnr)
    return field
