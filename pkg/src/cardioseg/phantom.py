"""Synthetic biventricular phantoms for desk-scale training and testing.

Each slice renders the left-ventricular myocardium as an annulus (a solid
disc near the apex, where the cavity closes) plus a right-ventricular
crescent attached to the epicardial border. Profiles vary smoothly from
slice to slice so adjacent ground-truth masks overlap strongly, which is
what makes the propagation network's consistency testable. Geometry is
jittered per seed; rendering noise is seeded separately through the spec.
"""

from dataclasses import dataclass

import numpy as np

from .volume import Volume, TARGET_SPACING_MM


@dataclass
class PhantomSpec:
    n_slices: int
    image_size: int
    spacing_mm: float
    lv_center: np.ndarray            # (n_slices, 2) (cy, cx) pixel coords
    outer_radius_mm: np.ndarray      # (n_slices,), 0 where no ring
    inner_radius_mm: np.ndarray      # (n_slices,)
    rv_extent_rad: np.ndarray        # (n_slices,) angular extent, 0 = no RV
    rv_thickness_mm: np.ndarray      # (n_slices,)
    intensity_background: float
    intensity_myocardium: float
    intensity_blood: float
    noise_sigma: float
    seed: int

    @property
    def base_index(self):
        return self.n_slices - 1

    def validate(self):
        n = self.n_slices
        for name in ("lv_center", "outer_radius_mm", "inner_radius_mm",
                     "rv_extent_rad", "rv_thickness_mm"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have {n} entries")
        if self.outer_radius_mm[0] != 0:
            raise ValueError("outer radius must reach 0 at the apex end")
        ring = self.outer_radius_mm > 0
        if np.any(self.inner_radius_mm[ring] >= self.outer_radius_mm[ring]):
            raise ValueError("inner radius must stay below outer radius")
        if np.any(self.inner_radius_mm < 0) or np.any(self.outer_radius_mm < 0):
            raise ValueError("radii must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def build_spec(seed, n_slices=60, image_size=128, noise_sigma=0.02):
    """Default phantom family: seeded jitter around a common anatomy."""
    rng = np.random.default_rng(seed)
    i = np.arange(n_slices)

    r_max = rng.uniform(26.0, 31.0)              # epicardial radius, mm
    wall = rng.uniform(6.5, 8.5)                 # myocardial thickness, mm
    apex_len = int(rng.integers(2, 4))           # empty slices at the apex tip
    growth = rng.uniform(1.05, 1.07)             # per-slice radius ratio

    outer = np.zeros(n_slices)
    ramp = 5.0 * growth ** np.arange(n_slices)
    outer[apex_len:] = np.minimum(r_max, ramp[: n_slices - apex_len])
    wobble = 1.0 + 0.02 * np.sin(2.0 * np.pi * i / n_slices + rng.uniform(0, 2 * np.pi))
    outer = outer * wobble
    inner = np.maximum(0.0, outer - wall)

    rv_start = 12.0                              # RV appears once the ring is big
    rv_full = rng.uniform(1.7, 2.2)              # full angular extent, rad
    rv_extent = np.clip((outer - rv_start) / 8.0, 0.0, 1.0) * rv_full
    rv_th = np.full(n_slices, wall * rng.uniform(0.75, 0.9))

    drift_amp = rng.uniform(1.5, 3.5)
    phase_y, phase_x = rng.uniform(0, 2 * np.pi, 2)
    center = np.stack(
        [
            image_size / 2.0 + drift_amp * np.sin(2 * np.pi * i / n_slices + phase_y),
            image_size / 2.0 + drift_amp * np.sin(2 * np.pi * i / n_slices + phase_x),
        ],
        axis=1,
    )

    spec = PhantomSpec(
        n_slices=n_slices,
        image_size=image_size,
        spacing_mm=TARGET_SPACING_MM,
        lv_center=center,
        outer_radius_mm=outer,
        inner_radius_mm=inner,
        rv_extent_rad=rv_extent,
        rv_thickness_mm=rv_th,
        intensity_background=0.15 + rng.uniform(-0.03, 0.03),
        intensity_myocardium=0.50 + rng.uniform(-0.03, 0.03),
        intensity_blood=0.85 + rng.uniform(-0.03, 0.03),
        noise_sigma=noise_sigma,
        seed=seed,
    )
    spec.validate()
    return spec


def generate_phantom(spec):
    """Render (Volume, ground-truth mask stack) from a spec.

    The ground truth is the noiseless myocardium indicator; texture noise
    only touches the image volume.
    """
    spec.validate()
    n, size = spec.n_slices, spec.image_size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    image = np.empty((n, size, size), dtype=np.float64)
    gt = np.zeros((n, size, size), dtype=np.uint8)
    rng = np.random.default_rng(spec.seed)
    for k in range(n):
        cy, cx = spec.lv_center[k]
        d = np.hypot(yy - cy, xx - cx) * spec.spacing_mm
        r_out, r_in = spec.outer_radius_mm[k], spec.inner_radius_mm[k]
        ring = (d <= r_out) & (d >= r_in) if r_out > 0 else np.zeros_like(d, bool)
        blood = (d < r_in) if r_in > 0 else np.zeros_like(d, bool)
        ext = spec.rv_extent_rad[k]
        if ext > 0 and r_out > 0:
            ang = np.arctan2(yy - cy, xx - cx)  # RV sits at angle pi (-x side)
            ang_off = np.abs(np.angle(np.exp(1j * (ang - np.pi))))
            rv = (d >= r_out) & (d <= r_out + spec.rv_thickness_mm[k]) & (
                ang_off <= ext / 2.0
            )
        else:
            rv = np.zeros_like(d, bool)
        myo = ring | rv
        sl = np.full((size, size), spec.intensity_background)
        sl[blood] = spec.intensity_blood
        sl[myo] = spec.intensity_myocardium
        image[k] = sl
        gt[k] = myo
    if spec.noise_sigma > 0:
        image += rng.normal(0.0, spec.noise_sigma, image.shape)
    vol = Volume(
        data=image,
        spacing=(spec.spacing_mm,) * 3,
        base_index=spec.base_index,
    )
    return vol, gt
