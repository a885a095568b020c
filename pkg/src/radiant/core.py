"""Shared scene primitives: voxel fields, cameras, rays, images, SRT transforms.

All arrays are float64 numpy; colors live in [0, 1], densities are
non-negative with units of 1/world-length. World frame is right handed
with the camera convention +z forward, x right, y down.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as _dc_field
from typing import Optional, Tuple, Union

import numpy as np

ROTATION_TOL = 1e-6
DIRECTION_TOL = 1e-9

# source tags for ray samples
SOURCE_OBJECT = 0
SOURCE_BACKGROUND = 1


def as_vec3(value, name: str = "vector") -> np.ndarray:
    v = np.asarray(value, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {v.shape}")
    return v


def check_rotation(r: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    """Validate a proper rotation matrix (orthonormal, det +1)."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol):
        raise ValueError("rotation matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("rotation matrix determinant must be +1")
    return r


def rotation_about_axis(axis, degrees: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    k = as_vec3(axis, "axis")
    norm = np.linalg.norm(k)
    if norm == 0.0:
        raise ValueError("rotation axis must be nonzero")
    k = k / norm
    theta = np.deg2rad(degrees)
    kx = np.array(
        [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]
    )
    return np.eye(3) * np.cos(theta) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * np.outer(k, k)


@dataclass
class VoxelField:
    """Dense voxel grid of (density, rgb) with trilinear interpolation.

    Invariants: density >= 0 everywhere, color channels in [0, 1],
    bounds_min < bounds_max componentwise, resolution >= 2 per axis.

    Queries are pure and safe to run concurrently; mutation is
    single-writer and must be followed by note_mutation() so cached
    content fingerprints stay fresh.
    """

    resolution: Tuple[int, int, int]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    density: np.ndarray  # (nx, ny, nz)
    color: np.ndarray    # (nx, ny, nz, 3)
    _version: int = _dc_field(default=0, repr=False)
    _fingerprint_cache: Optional[Tuple[int, bytes]] = _dc_field(default=None, repr=False)

    def __post_init__(self):
        self.resolution = tuple(int(n) for n in self.resolution)
        if len(self.resolution) != 3 or any(n < 2 for n in self.resolution):
            raise ValueError(f"resolution must be >= 2 per axis, got {self.resolution}")
        self.bounds_min = as_vec3(self.bounds_min, "bounds_min")
        self.bounds_max = as_vec3(self.bounds_max, "bounds_max")
        if not np.all(self.bounds_min < self.bounds_max):
            raise ValueError("bounds_min must be < bounds_max componentwise")
        self.density = np.ascontiguousarray(self.density, dtype=np.float64)
        self.color = np.ascontiguousarray(self.color, dtype=np.float64)
        if self.density.shape != self.resolution:
            raise ValueError(f"density shape {self.density.shape} != resolution {self.resolution}")
        if self.color.shape != self.resolution + (3,):
            raise ValueError(f"color shape {self.color.shape} != resolution + (3,)")
        self.validate_values()

    @classmethod
    def constant(cls, resolution, bounds_min, bounds_max,
                 density: float = 0.01, color=(0.5, 0.5, 0.5)) -> "VoxelField":
        resolution = tuple(int(n) for n in resolution)
        dens = np.full(resolution, float(density), dtype=np.float64)
        col = np.empty(resolution + (3,), dtype=np.float64)
        col[...] = np.asarray(color, dtype=np.float64)
        return cls(resolution, bounds_min, bounds_max, dens, col)

    @classmethod
    def zeros(cls, resolution, bounds_min, bounds_max) -> "VoxelField":
        return cls.constant(resolution, bounds_min, bounds_max, density=0.0, color=(0.0, 0.0, 0.0))

    def validate_values(self):
        if self.density.min() < 0.0 or not np.isfinite(self.density).all():
            raise ValueError("density must be finite and >= 0 everywhere")
        if self.color.min() < 0.0 or self.color.max() > 1.0 or not np.isfinite(self.color).all():
            raise ValueError("color channels must be finite and in [0, 1]")

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.bounds_max - self.bounds_min) / np.array(self.resolution, dtype=np.float64)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    def axis_centers(self, axis: int) -> np.ndarray:
        """World coordinates of voxel centers along one axis."""
        n = self.resolution[axis]
        h = self.voxel_size[axis]
        return self.bounds_min[axis] + (np.arange(n) + 0.5) * h

    def voxel_center(self, i: int, j: int, k: int) -> np.ndarray:
        idx = np.array([i, j, k], dtype=np.float64)
        return self.bounds_min + (idx + 0.5) * self.voxel_size

    def note_mutation(self):
        """Invalidate cached state after an in-place edit of density/color."""
        self._version += 1

    def fingerprint(self) -> bytes:
        """16-byte content digest; cached until note_mutation()."""
        if self._fingerprint_cache is not None and self._fingerprint_cache[0] == self._version:
            return self._fingerprint_cache[1]
        h = hashlib.blake2b(digest_size=16)
        h.update(np.array(self.resolution, dtype=np.int64).tobytes())
        h.update(self.bounds_min.tobytes())
        h.update(self.bounds_max.tobytes())
        h.update(self.density.tobytes())
        h.update(self.color.tobytes())
        digest = h.digest()
        self._fingerprint_cache = (self._version, digest)
        return digest

    def copy(self) -> "VoxelField":
        return VoxelField(self.resolution, self.bounds_min.copy(), self.bounds_max.copy(),
                          self.density.copy(), self.color.copy())


class TrilinearStencil:
    """Interpolation stencil at a batch of world points.

    Precomputes base corner indices and fractional weights so forward
    queries (gather) and gradient scatter reuse the exact same stencil.
    Points outside the field bounds get zero weight everywhere; the
    stencil stores only inside-bounds points and re-expands on gather.
    """

    __slots__ = ("shape", "where", "i0", "frac", "resolution")

    def __init__(self, field: VoxelField, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        self.shape = pts.shape[:-1]
        flat = pts.reshape(-1, 3)
        inside = np.all((flat >= field.bounds_min) & (flat <= field.bounds_max), axis=-1)
        self.where = np.nonzero(inside)[0]
        res = np.array(field.resolution, dtype=np.int64)
        g = (flat[self.where] - field.bounds_min) / field.voxel_size - 0.5
        i0 = np.floor(g)
        np.clip(i0, 0, res - 2, out=i0)
        self.i0 = i0.astype(np.int64)
        self.frac = np.clip(g - i0, 0.0, 1.0)
        self.resolution = field.resolution

    def _corners(self):
        """Flat voxel indices and weights for the 8 cell corners."""
        f = self.frac
        _, ny, nz = self.resolution
        wx = (1.0 - f[:, 0], f[:, 0])
        wy = (1.0 - f[:, 1], f[:, 1])
        wz = (1.0 - f[:, 2], f[:, 2])
        for corner in range(8):
            dx, dy, dz = (corner >> 2) & 1, (corner >> 1) & 1, corner & 1
            idx = ((self.i0[:, 0] + dx) * ny + (self.i0[:, 1] + dy)) * nz + (self.i0[:, 2] + dz)
            yield idx, wx[dx] * wy[dy] * wz[dz]

    def gather(self, field: VoxelField):
        """Trilinearly interpolated (density, color) at the stencil points."""
        dens_flat = field.density.reshape(-1)
        col_flat = field.color.reshape(-1, 3)
        k = self.where.shape[0]
        dens_in = np.zeros(k)
        col_in = np.zeros((k, 3))
        for idx, w in self._corners():
            dens_in += w * dens_flat[idx]
            col_in += w[:, None] * col_flat[idx]
        n = int(np.prod(self.shape)) if self.shape else 1
        dens = np.zeros(n)
        col = np.zeros((n, 3))
        dens[self.where] = dens_in
        col[self.where] = col_in
        return dens.reshape(self.shape), col.reshape(self.shape + (3,))

    def scatter(self, d_density: np.ndarray, d_color: np.ndarray,
                out_density_flat: np.ndarray, out_color_flat: np.ndarray):
        """Accumulate per-point gradients back onto the voxel parameters."""
        n = out_density_flat.shape[0]
        if self.where.size == 0:
            return
        dd = d_density.reshape(-1)[self.where]
        dc = d_color.reshape(-1, 3)[self.where]
        idx_parts, wdd_parts, wdc_parts = [], [], []
        for idx, w in self._corners():
            idx_parts.append(idx)
            wdd_parts.append(w * dd)
            wdc_parts.append(w[:, None] * dc)
        idx_all = np.concatenate(idx_parts)
        out_density_flat += np.bincount(idx_all, weights=np.concatenate(wdd_parts), minlength=n)
        wdc_all = np.concatenate(wdc_parts, axis=0)
        for ch in range(3):
            out_color_flat[:, ch] += np.bincount(idx_all, weights=wdc_all[:, ch], minlength=n)


def trilinear_query(field: VoxelField, point):
    """Interpolated (density, color) at world point(s).

    Accepts a single (3,) point or any (..., 3) batch. Points outside the
    field bounds return density 0 and black.
    """
    pts = np.asarray(point, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    dens, col = TrilinearStencil(field, pts).gather(field)
    if single:
        return float(dens[0]), col[0]
    return dens, col


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: pixel intrinsics plus a rigid cam-to-world pose.

    Convention: +z forward, x right, y down; pixel centers at +0.5.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_to_world: np.ndarray  # (4, 4)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        m = np.asarray(self.cam_to_world, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"cam_to_world must be 4x4, got {m.shape}")
        check_rotation(m[:3, :3])
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("cam_to_world bottom row must be [0, 0, 0, 1]")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "cam_to_world", m)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def position(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_world[:3, :3]


@dataclass(frozen=True)
class Ray:
    """World-space ray with a unit direction and a [near, far) depth range."""

    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        o = as_vec3(self.origin, "origin")
        d = as_vec3(self.direction, "direction")
        if abs(np.linalg.norm(d) - 1.0) > DIRECTION_TOL:
            raise ValueError("ray direction must be unit length")
        if not (0.0 <= self.near < self.far):
            raise ValueError(f"need 0 <= near < far, got near={self.near} far={self.far}")
        o = o.copy(); o.setflags(write=False)
        d = d.copy(); d.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def point_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return self.origin + t[..., None] * self.direction


@dataclass
class RaySamples:
    """Per-ray sample list: depth, segment length, density, color, source tag.

    delta is each sample's own integration segment, assigned at sampling
    time; it is deliberately NOT recomputed when sample sets from several
    fields are merged, so zero-density samples behave as exact no-ops.
    """

    depth: np.ndarray    # (N,)
    delta: np.ndarray    # (N,)
    density: np.ndarray  # (N,)
    color: np.ndarray    # (N, 3)
    source: np.ndarray   # (N,) uint8, SOURCE_OBJECT / SOURCE_BACKGROUND
    near: float
    far: float

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.delta = np.asarray(self.delta, dtype=np.float64)
        self.density = np.asarray(self.density, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        self.source = np.asarray(self.source, dtype=np.uint8)
        n = self.depth.shape[0]
        if not (self.delta.shape == (n,) and self.density.shape == (n,)
                and self.color.shape == (n, 3) and self.source.shape == (n,)):
            raise ValueError("inconsistent sample array shapes")
        if n and self.delta.min() <= 0.0:
            raise ValueError("sample deltas must be positive")

    def __len__(self) -> int:
        return self.depth.shape[0]

    def sorted_by_depth(self) -> "RaySamples":
        """Stable sort by depth (preserves insertion order at ties)."""
        order = np.argsort(self.depth, kind="stable")
        return RaySamples(self.depth[order], self.delta[order], self.density[order],
                          self.color[order], self.source[order], self.near, self.far)

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.depth) >= 0.0))


@dataclass
class RgbaImage:
    """Straight-alpha (non-premultiplied) RGBA image, all channels in [0, 1]."""

    rgb: np.ndarray    # (H, W, 3)
    alpha: np.ndarray  # (H, W)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValueError(f"rgb must be (H, W, 3), got {self.rgb.shape}")
        if self.alpha.shape != self.rgb.shape[:2]:
            raise ValueError("alpha shape must match rgb")
        for name, arr in (("rgb", self.rgb), ("alpha", self.alpha)):
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"{name} channels must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def copy(self) -> "RgbaImage":
        return RgbaImage(self.rgb.copy(), self.alpha.copy())


@dataclass
class MaskImage:
    """Strictly binary per-pixel mask stored as bool."""

    data: np.ndarray  # (H, W) bool

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            vals = np.unique(arr)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValueError("mask values must be strictly binary")
            arr = arr.astype(bool)
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def copy(self) -> "MaskImage":
        return MaskImage(self.data.copy())


@dataclass(frozen=True)
class SrtTransform:
    """Uniform scale + rotation + translation about a pivot centroid.

    The world-space forward map is p' = scale * R @ (p - centroid)
    + centroid + translation.
    """

    scale: float
    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)
    centroid: np.ndarray     # (3,)

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")
        r = check_rotation(self.rotation).copy()
        t = as_vec3(self.translation, "translation").copy()
        c = as_vec3(self.centroid, "centroid").copy()
        for a in (r, t, c):
            a.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "centroid", c)

    @classmethod
    def identity(cls, centroid=(0.0, 0.0, 0.0)) -> "SrtTransform":
        return cls(1.0, np.eye(3), np.zeros(3), centroid)

    def is_identity(self) -> bool:
        return (self.scale == 1.0
                and np.array_equal(self.rotation, np.eye(3))
                and not self.translation.any())


def srt_world_to_canonical(point, transform: SrtTransform) -> np.ndarray:
    """Map world point(s) into the object's canonical (untransformed) frame.

    Inverse of the forward map: R^-1 @ ((p - translation - centroid) / scale)
    + centroid. Accepts (3,) or (..., 3).
    """
    p = np.asarray(point, dtype=np.float64)
    v = (p - transform.translation - transform.centroid) / transform.scale
    return v @ transform.rotation + transform.centroid  # v @ R == R^T @ v rowwise


def srt_canonical_to_world(point, transform: SrtTransform) -> np.ndarray:
    """Forward map: canonical object point(s) to transformed world point(s)."""
    p = np.asarray(point, dtype=np.float64)
    return transform.scale * (p - transform.centroid) @ transform.rotation.T \
        + transform.centroid + transform.translation


def srt_density_correction(transform: SrtTransform) -> float:
    """Density multiplier preserving optical depth under uniform scaling.

    A feature of world extent L*scale sampled from the canonical field
    must keep sigma*length invariant, hence 1/scale.
    """
    return 1.0 / transform.scale
