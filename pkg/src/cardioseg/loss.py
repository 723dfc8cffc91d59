"""Stabilized, class-balanced cross-entropy pixel loss and its gradient.

The prediction is first squeezed toward the interior of (0,1) via
p' = a*p + b, which keeps every logarithm finite. A dead zone of width t
around the target zeroes both loss and gradient once a pixel is close
enough, so the mass of easy background pixels stops dominating training.
Per-pixel losses are summed (not averaged), and the multi-scale total adds
one mask loss per prediction scale against block-downsampled ground truth.
"""

from dataclasses import dataclass

import numpy as np

from .layers import ShapeError

INIT_SCALES = (32, 64, 128)
PROP_SCALES = (64, 128)


@dataclass(frozen=True)
class LossConfig:
    a: float = 0.999
    b: float = 0.0005
    t: float = 0.02

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        if abs(self.a + 2 * self.b - 1.0) > 1e-12:
            raise ValueError(f"a + 2b must equal 1, got {self.a + 2 * self.b}")
        if not (0 < self.t < 1):
            raise ValueError(f"t must lie in (0,1), got {self.t}")


def _validated(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"prediction shape {p.shape} != ground truth shape {g.shape}")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("predicted probabilities must lie in [0, 1]")
    if not np.all((g == 0.0) | (g == 1.0)):
        raise ValueError("ground truth must be 0/1 valued")
    return p, g


def _loss_terms(p, g, cfg):
    pp = cfg.a * p + cfg.b
    dead = np.abs(g - pp) < cfg.t
    loss = np.where(g == 1.0, -np.log(pp), -np.log1p(-pp))
    return np.where(dead, 0.0, loss), dead, pp


def pixel_loss(p, g, cfg=LossConfig()):
    """Loss for one pixel (or elementwise over arrays of pixels)."""
    scalar = np.isscalar(p) or np.ndim(p) == 0
    p, g = _validated(p, g)
    loss, _, _ = _loss_terms(p, g, cfg)
    return float(loss) if scalar else loss


def pixel_loss_grad(p, g, cfg=LossConfig()):
    """d(pixel_loss)/dp; exactly zero inside the dead zone."""
    scalar = np.isscalar(p) or np.ndim(p) == 0
    p, g = _validated(p, g)
    pp = cfg.a * p + cfg.b
    dead = np.abs(g - pp) < cfg.t
    grad = np.where(g == 1.0, -cfg.a / pp, cfg.a / (1.0 - pp))
    grad = np.where(dead, 0.0, grad)
    return float(grad) if scalar else grad


def mask_loss(pred, gt, cfg=LossConfig()):
    """Sum of pixel losses over a whole mask."""
    p, g = _validated(pred, gt)
    loss, _, _ = _loss_terms(p, g, cfg)
    return float(loss.sum())


def mask_loss_grad(pred, gt, cfg=LossConfig()):
    """Elementwise gradient of mask_loss, in the prediction's dtype."""
    grad = pixel_loss_grad(pred, gt, cfg)
    return np.asarray(grad, dtype=np.asarray(pred).dtype)


def downsample_gt(gt, factor):
    """Block-mean a binary mask, thresholding at 0.5 with ties mapped to 1."""
    gt = np.asarray(gt)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    h, w = gt.shape[-2], gt.shape[-1]
    if h % factor or w % factor:
        raise ShapeError(f"extent {h}x{w} not divisible by factor {factor}")
    if not np.all((gt == 0) | (gt == 1)):
        raise ValueError("ground truth must be 0/1 valued")
    if factor == 1:
        return gt.astype(np.float64)
    blocks = gt.reshape(gt.shape[:-2] + (h // factor, factor, w // factor, factor))
    means = blocks.astype(np.float64).mean(axis=(-3, -1))
    return (means >= 0.5).astype(np.float64)


def _check_scales(scales, kind):
    if kind is None:
        return
    expected = {"init": INIT_SCALES, "propagation": PROP_SCALES}.get(kind)
    if expected is None:
        raise ValueError(f"unknown network kind {kind!r}")
    if tuple(scales) != expected:
        raise ShapeError(
            f"{kind} network expects prediction scales {expected}, got {tuple(scales)}"
        )


def multiscale_loss(preds, gt_full, cfg=LossConfig(), kind=None):
    """Total loss over all scales plus the per-scale breakdown.

    `preds` maps scale -> probability mask whose trailing spatial extent
    equals the scale; ground truth at coarser scales is derived with
    downsample_gt. Returns (total, {scale: loss}).
    """
    scales = sorted(preds)
    _check_scales(scales, kind)
    gt_full = np.asarray(gt_full)
    finest = scales[-1]
    if gt_full.shape[-1] != finest or gt_full.shape[-2] != finest:
        raise ShapeError(
            f"ground truth extent {gt_full.shape[-2:]} != finest scale {finest}"
        )
    breakdown = {}
    for s in scales:
        gt_s = downsample_gt(gt_full, finest // s)
        breakdown[s] = mask_loss(preds[s], gt_s, cfg)
    return sum(breakdown.values()), breakdown


def multiscale_loss_with_grad(preds, gt_full, cfg=LossConfig(), kind=None):
    """As multiscale_loss, also returning {scale: dL/dpred}."""
    scales = sorted(preds)
    _check_scales(scales, kind)
    gt_full = np.asarray(gt_full)
    finest = scales[-1]
    breakdown, grads = {}, {}
    for s in scales:
        gt_s = downsample_gt(gt_full, finest // s)
        breakdown[s] = mask_loss(preds[s], gt_s, cfg)
        grads[s] = mask_loss_grad(preds[s], gt_s, cfg)
    return sum(breakdown.values()), breakdown, grads
