"""Volume container and preprocessing: crop, isotropic resample, normalize.

Volumes are stored (nz, ny, nx) with x fastest; spacing is (sx, sy, sz) in
mm. Preprocessing brings any input to the network grid: 1.25 mm isotropic
voxels with a 128x128 in-plane extent, intensities mapped to [0, 1] by the
1st/99th percentiles.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

TARGET_SPACING_MM = 1.25
PLANE_SIZE = 128


@dataclass
class Volume:
    data: np.ndarray                 # (nz, ny, nx)
    spacing: tuple                   # (sx, sy, sz) mm
    base_index: int
    crop_box: tuple | None = None    # (x0, x1, y0, y1, z0, z1), half-open

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {self.data.shape}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing components must be > 0, got {self.spacing}")
        if not (0 <= self.base_index < self.data.shape[0]):
            raise ValueError(
                f"base_index {self.base_index} outside [0, {self.data.shape[0] - 1}]"
            )

    @property
    def dims(self):
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)


def _crop(v):
    if v.crop_box is None:
        return v
    x0, x1, y0, y1, z0, z1 = v.crop_box
    nz, ny, nx = v.data.shape
    if not (0 <= x0 < x1 <= nx and 0 <= y0 < y1 <= ny and 0 <= z0 < z1 <= nz):
        raise ValueError(f"crop_box {v.crop_box} outside volume dims {v.dims}")
    if not (z0 <= v.base_index < z1):
        raise ValueError("crop_box excludes the base slice")
    return Volume(v.data[z0:z1, y0:y1, x0:x1], v.spacing, v.base_index - z0, None)


def _center_to(plane, size, fill):
    """Center-crop or center-pad the trailing two axes to size x size."""
    out = plane
    for axis in (1, 2):
        n = out.shape[axis]
        if n > size:
            start = (n - size) // 2
            sl = [slice(None)] * 3
            sl[axis] = slice(start, start + size)
            out = out[tuple(sl)]
        elif n < size:
            before = (size - n) // 2
            pad = [(0, 0)] * 3
            pad[axis] = (before, size - n - before)
            out = np.pad(out, pad, constant_values=fill)
    return out


def resample_isotropic(v, target_mm=TARGET_SPACING_MM, plane_size=PLANE_SIZE):
    """Trilinear resample onto a `target_mm` isotropic grid over the crop
    box, then center-pad/crop in-plane to plane_size x plane_size."""
    v = _crop(v)
    nz, ny, nx = v.data.shape
    if min(nz, ny, nx) < 2:
        raise ValueError(f"cannot resample a single-voxel axis (dims {v.dims})")
    sx, sy, sz = v.spacing
    counts = [int(np.floor((n - 1) * s / target_mm)) + 1
              for n, s in ((nz, sz), (ny, sy), (nx, sx))]
    axes = [np.arange(c) * target_mm / s
            for c, s in zip(counts, (sz, sy, sx))]
    grid = np.meshgrid(*axes, indexing="ij")
    data = ndimage.map_coordinates(
        v.data.astype(np.float64), np.stack(grid), order=1, mode="nearest"
    )
    base = int(round(v.base_index * sz / target_mm))
    base = min(max(base, 0), data.shape[0] - 1)
    data = _center_to(data, plane_size, fill=float(data.min()))
    return Volume(data, (target_mm, target_mm, target_mm), base, None)


def normalize_intensity(v):
    """Map the [1st, 99th] intensity percentiles to [0, 1], clamped."""
    lo, hi = np.percentile(v.data, [1.0, 99.0])
    if hi <= lo:
        warnings.warn("constant-intensity volume; normalizing to all zeros")
        return replace(v, data=np.zeros_like(v.data, dtype=np.float64))
    data = np.clip((v.data.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return replace(v, data=data)


def preprocess(v, target_mm=TARGET_SPACING_MM, plane_size=PLANE_SIZE):
    """Full preprocessing chain: crop, resample, normalize."""
    return normalize_intensity(resample_isotropic(v, target_mm, plane_size))
