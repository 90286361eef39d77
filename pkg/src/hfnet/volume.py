"""Volumetric images: the Volume type plus geometry and intensity operations.

A Volume couples a dense 3D scalar grid (float32, indexed [x, y, z]) with
its voxel spacing and a 4x4 voxel-index -> world-mm affine.  All operations
here are pure: they return new Volume objects and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateInputError, GeometryError, ShapeError

__all__ = [
    "Volume",
    "RoiSpec",
    "GridSpec",
    "transform_point",
    "average_points",
    "resample",
    "crop_roi",
    "normalize_intensity",
    "average_frames",
]

_BOTTOM_ROW = np.array([0.0, 0.0, 0.0, 1.0])


def _check_affine(affine):
    affine = np.asarray(affine, dtype=np.float64)
    if affine.shape != (4, 4):
        raise ShapeError(f"affine must be 4x4, got {affine.shape}")
    if not np.array_equal(affine[3], _BOTTOM_ROW):
        raise GeometryError(f"affine bottom row must be (0,0,0,1), got {affine[3]}")
    return affine


@dataclass
class Volume:
    """Dense scalar grid with spacing and voxel-to-world affine.

    voxels is indexed [x, y, z]; serialization uses x-fastest order.
    """

    voxels: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray = field(default=None)

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        if self.voxels.ndim != 3 or min(self.voxels.shape) < 1:
            raise ShapeError(f"voxels must be a non-empty 3D array, got shape {self.voxels.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ShapeError(f"spacing must be 3 positive reals, got {self.spacing}")
        if self.affine is None:
            self.affine = np.diag((*self.spacing, 1.0))
        self.affine = _check_affine(self.affine)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def world_center(self) -> np.ndarray:
        """World coordinates of the grid center (voxel coordinate dims/2).

        This convention makes cropping a full-size ROI at a volume's own
        center an exact identity: floor(dims/2) - dims//2 == 0.
        """
        center_voxel = np.array(self.dims, dtype=np.float64) / 2.0
        return transform_point(self.affine, center_voxel)

    def copy(self) -> "Volume":
        return Volume(self.voxels.copy(), self.spacing, self.affine.copy())


@dataclass
class GridSpec:
    """A sampling grid: dims, spacing and affine, without voxel data."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    affine: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ShapeError(f"dims must be 3 positive integers, got {self.dims}")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.affine = _check_affine(self.affine)

    @classmethod
    def of_volume(cls, v: Volume) -> "GridSpec":
        return cls(v.dims, v.spacing, v.affine.copy())


@dataclass
class RoiSpec:
    """Axis-aligned region of interest around a world-space center point.

    center_world of None means "use the geometric center of the source
    volume" (the convention of the synthetic cohorts, where the structures
    sit symmetrically about the grid center).
    """

    center_world: tuple[float, float, float] | None = None
    size_voxels: tuple[int, int, int] = (96, 96, 48)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.center_world is not None:
            self.center_world = tuple(float(c) for c in self.center_world)
        self.size_voxels = tuple(int(s) for s in self.size_voxels)
        if any(s < 1 for s in self.size_voxels):
            raise ShapeError(f"size_voxels must be positive, got {self.size_voxels}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if any(s <= 0 for s in self.spacing):
            raise ShapeError(f"spacing must be positive, got {self.spacing}")

    def resolve_center(self, v: Volume) -> np.ndarray:
        if self.center_world is not None:
            return np.asarray(self.center_world, dtype=np.float64)
        return v.world_center()

    def grid(self, v: Volume) -> GridSpec:
        """Sampling grid of this ROI: axis-aligned, centered on the ROI center.

        Uses the same dims/2 center convention as Volume.world_center, so a
        full-size ROI at a volume's own center lands exactly on its grid.
        """
        center = self.resolve_center(v)
        size = np.array(self.size_voxels, dtype=np.float64)
        sp = np.array(self.spacing, dtype=np.float64)
        origin = center - sp * size / 2.0
        affine = np.diag((*self.spacing, 1.0))
        affine[:3, 3] = origin
        return GridSpec(self.size_voxels, self.spacing, affine)


def transform_point(affine, p):
    """Apply a 4x4 affine to a 3-point: (affine @ (p, 1))[:3]."""
    affine = _check_affine(affine)
    p = np.asarray(p, dtype=np.float64)
    return affine[:3, :3] @ p + affine[:3, 3]


def average_points(points):
    """Componentwise arithmetic mean of a non-empty list of 3-points."""
    if len(points) == 0:
        raise DataError("cannot average an empty list of points")
    pts = np.asarray(points, dtype=np.float64)
    return pts.mean(axis=0)


def _trilinear_sample(voxels: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample voxels at fractional index coordinates (3, M); outside -> 0.

    Zero-padding the source by one voxel lets partially-overlapping samples
    blend correctly with the fill value at the boundary.
    """
    src = np.pad(voxels.astype(np.float64), 1)
    c = coords + 1.0
    lo = np.floor(c).astype(np.int64)
    frac = c - lo

    limit = np.array(src.shape, dtype=np.int64).reshape(3, 1) - 2
    inside = np.all((lo >= 0) & (lo <= limit), axis=0)
    lo = np.clip(lo, 0, limit)

    x0, y0, z0 = lo
    fx, fy, fz = frac
    out = np.zeros(coords.shape[1], dtype=np.float64)
    if np.any(inside):
        x0, y0, z0 = x0[inside], y0[inside], z0[inside]
        fx, fy, fz = fx[inside], fy[inside], fz[inside]
        c000 = src[x0, y0, z0]
        c100 = src[x0 + 1, y0, z0]
        c010 = src[x0, y0 + 1, z0]
        c001 = src[x0, y0, z0 + 1]
        c110 = src[x0 + 1, y0 + 1, z0]
        c101 = src[x0 + 1, y0, z0 + 1]
        c011 = src[x0, y0 + 1, z0 + 1]
        c111 = src[x0 + 1, y0 + 1, z0 + 1]
        out[inside] = (
            c000 * (1 - fx) * (1 - fy) * (1 - fz)
            + c100 * fx * (1 - fy) * (1 - fz)
            + c010 * (1 - fx) * fy * (1 - fz)
            + c001 * (1 - fx) * (1 - fy) * fz
            + c110 * fx * fy * (1 - fz)
            + c101 * fx * (1 - fy) * fz
            + c011 * (1 - fx) * fy * fz
            + c111 * fx * fy * fz
        )
    return out


def resample(v: Volume, target, world_transform=None) -> Volume:
    """Trilinearly resample a volume onto a target grid.

    target is a GridSpec, a RoiSpec, or a Volume (whose grid is used).
    world_transform maps target-space world points into the source volume's
    world space (identity when omitted); registration matrices produced by
    external tools plug in here.
    """
    if isinstance(target, RoiSpec):
        grid = target.grid(v)
    elif isinstance(target, Volume):
        grid = GridSpec.of_volume(target)
    else:
        grid = target

    if world_transform is None:
        world_transform = np.eye(4)
    world_transform = _check_affine(world_transform)
    try:
        np.linalg.inv(world_transform)  # invertibility is a precondition
        inv_source = np.linalg.inv(v.affine)
        full = inv_source @ world_transform @ grid.affine
    except np.linalg.LinAlgError as exc:
        raise GeometryError(f"singular transform: {exc}") from exc
    if not np.all(np.isfinite(full)):
        raise GeometryError("transform chain produced non-finite entries")

    nx, ny, nz = grid.dims
    ii, jj, kk = np.meshgrid(
        np.arange(nx, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nz, dtype=np.float64),
        indexing="ij",
    )
    idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()])
    coords = full[:3, :3] @ idx + full[:3, 3:4]
    sampled = _trilinear_sample(v.voxels, coords)
    out = sampled.reshape(grid.dims).astype(np.float32)
    return Volume(out, grid.spacing, grid.affine.copy())


def crop_roi(v: Volume, roi: RoiSpec) -> Volume:
    """Cut an ROI-sized box out of the volume, zero-padded outside its extent.

    The box starts at floor(center_voxel) - floor(size/2) per axis; the
    output affine is shifted so world coordinates of every voxel are
    preserved.  Requires roi.spacing == v.spacing (resample first otherwise).
    """
    if not np.allclose(roi.spacing, v.spacing, rtol=1e-6, atol=1e-9):
        raise ShapeError(
            f"crop_roi needs matching spacing (roi {roi.spacing} vs volume {v.spacing}); resample first"
        )
    center_world = roi.resolve_center(v)
    inv = np.linalg.inv(v.affine)
    center_voxel = transform_point(inv, center_world)
    size = np.array(roi.size_voxels, dtype=np.int64)
    start = np.floor(center_voxel).astype(np.int64) - size // 2

    out = np.zeros(tuple(size), dtype=np.float32)
    src_lo = np.maximum(start, 0)
    src_hi = np.minimum(start + size, np.array(v.dims))
    if np.all(src_hi > src_lo):
        dst_lo = src_lo - start
        dst_hi = src_hi - start
        out[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = v.voxels[
            src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]
        ]
    affine = v.affine.copy()
    affine[:3, 3] = transform_point(v.affine, start.astype(np.float64))
    return Volume(out, v.spacing, affine)


def normalize_intensity(v: Volume, method: str = "zscore") -> Volume:
    """Normalize voxel intensities: zscore (mean 0, std 1) or minmax ([0, 1])."""
    data = v.voxels.astype(np.float64)
    if method == "zscore":
        std = data.std()
        if std == 0.0:
            raise DegenerateInputError("zscore needs a non-constant volume")
        out = (data - data.mean()) / std
    elif method == "minmax":
        lo, hi = data.min(), data.max()
        if hi == lo:
            raise DegenerateInputError("minmax needs a non-constant volume")
        out = (data - lo) / (hi - lo)
    else:
        raise DataError(f"unknown normalization method {method!r}")
    return Volume(out.astype(np.float32), v.spacing, v.affine.copy())


def average_frames(frames: list[Volume], method: str = "zscore") -> Volume:
    """Collapse per-acquisition frames into one volume.

    Each frame is normalized (zscore by default) and the results are
    averaged voxelwise; frames must share dims.
    """
    if len(frames) == 0:
        raise DataError("cannot average an empty frame list")
    dims = frames[0].dims
    for f in frames[1:]:
        if f.dims != dims:
            raise ShapeError(f"frame dims differ: {f.dims} vs {dims}")
    acc = np.zeros(dims, dtype=np.float64)
    for f in frames:
        acc += normalize_intensity(f, method).voxels
    mean = (acc / len(frames)).astype(np.float32)
    first = frames[0]
    return Volume(mean, first.spacing, first.affine.copy())
