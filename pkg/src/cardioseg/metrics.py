"""Dice overlap metrics, slice-wise and pooled over the volume."""

import csv

import numpy as np

from .layers import ShapeError


def _as_binary(a, name):
    a = np.asarray(a)
    if not np.all((a == 0) | (a == 1)):
        raise ValueError(f"{name} must be a binary 0/1 mask")
    return a != 0


def _dice(a, b):
    inter = np.count_nonzero(a & b)
    total = np.count_nonzero(a) + np.count_nonzero(b)
    if total == 0:
        return 1.0  # agreement on absence
    return 2.0 * inter / total


def dice_2d(a, b):
    """2|a n b| / (|a| + |b|) for one slice; 1.0 when both are empty."""
    a, b = _as_binary(a, "a"), _as_binary(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return _dice(a, b)


def dice_3d(a, b):
    """Dice pooled over all voxels of a slice stack."""
    a, b = _as_binary(a, "a"), _as_binary(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3:
        raise ShapeError(f"expected 3D stacks, got shape {a.shape}")
    return _dice(a, b)


def slicewise_dice_profile(pred, gt, csv_path=None):
    """Per-slice Dice plus the smoothness statistic (max adjacent jump).

    Returns (profile, smoothness); optionally writes a
    (slice_index, dice) CSV.
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape or pred.ndim != 3:
        raise ShapeError(f"mask stacks must match in 3D: {pred.shape} vs {gt.shape}")
    profile = np.array([dice_2d(pred[i], gt[i]) for i in range(pred.shape[0])])
    smoothness = float(np.abs(np.diff(profile)).max()) if len(profile) > 1 else 0.0
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["slice_index", "dice"])
            for i, d in enumerate(profile):
                w.writerow([i, repr(float(d))])
    return profile, smoothness
