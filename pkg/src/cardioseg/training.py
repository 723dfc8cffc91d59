"""SGD training for both networks.

Plain stochastic gradient descent, batch size 1 by default, with the
paper-scale defaults (lr 1e-4, 300k iterations for the initialization
network, 600k for propagation) that desk-scale runs override. Every run is
deterministic for a fixed seed and single-threaded execution: one RNG
drives sampling and augmentation in a fixed draw order.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import networks
from .checkpoint import save_checkpoint
from .loss import LossConfig, multiscale_loss_with_grad
from .networks import PropagationInput, init_parameters

INIT_ITERATIONS_DEFAULT = 300_000
PROP_ITERATIONS_DEFAULT = 600_000


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class AugmentConfig:
    max_rotation_deg: float = 20.0
    gaussian_sigma: float = 0.03
    salt_pepper_fraction: float = 0.01
    enabled: bool = True

    def __post_init__(self):
        if not (0.0 <= self.salt_pepper_fraction <= 0.2):
            raise ValueError("salt_pepper_fraction must lie in [0, 0.2]")
        if self.max_rotation_deg < 0 or self.gaussian_sigma < 0:
            raise ValueError("augmentation magnitudes must be non-negative")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 1
    iterations: int | None = None  # None -> per-network default
    seed: int = 0
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    checkpoint_every: int = 0      # 0 disables periodic checkpoints
    log_every: int = 100
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


class LossLog:
    """Per-iteration loss records: (iteration, total, per-scale dict)."""

    def __init__(self, scales):
        self.scales = tuple(scales)
        self.rows = []

    def append(self, iteration, total, breakdown):
        self.rows.append((iteration, total, dict(breakdown)))

    def totals(self):
        return [r[1] for r in self.rows]

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["iteration", "total_loss"] + [f"loss_s{s}" for s in self.scales])
            for it, total, br in self.rows:
                w.writerow([it, repr(total)] + [repr(br[s]) for s in self.scales])
        return path


# ---------------------------------------------------------------------------
# augmentation

def augment_sample(images, masks, cfg, rng):
    """Jointly rotate a training sample, then add noise to the images only.

    One angle is drawn and applied to every slice in `images` and every
    mask in `masks` (nearest-neighbor for masks so they stay binary).
    Gaussian noise and salt-and-pepper corruption touch the images alone.
    """
    if not cfg.enabled:
        raise ValueError("augment_sample called with augmentation disabled")
    images = np.asarray(images, dtype=np.float64).copy()
    masks = np.asarray(masks, dtype=np.float64).copy()

    angle = float(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg))
    if angle != 0.0:
        images = ndimage.rotate(images, angle, axes=(1, 2), reshape=False,
                                order=1, mode="constant", cval=0.0)
        masks = ndimage.rotate(masks, angle, axes=(1, 2), reshape=False,
                               order=0, mode="constant", cval=0.0)

    if cfg.gaussian_sigma > 0:
        images += rng.normal(0.0, cfg.gaussian_sigma, images.shape)

    if cfg.salt_pepper_fraction > 0:
        lo, hi = float(images.min()), float(images.max())
        n = int(round(cfg.salt_pepper_fraction * images.size))
        if n > 0:
            idx = rng.choice(images.size, size=n, replace=False)
            salt = rng.random(n) < 0.5
            flat = images.reshape(-1)
            flat[idx[salt]] = hi
            flat[idx[~salt]] = lo
    return images, masks


# ---------------------------------------------------------------------------
# SGD

def sgd_step(params, grads, lr):
    """w <- w - lr * grad for every learnable tensor; returns params.

    Running statistics are untouched. A non-finite gradient aborts with a
    diagnostic naming the offending tensor.
    """
    for name, g in grads.items():
        w = params.tensors.get(name)
        if w is None:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if w.shape != g.shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {w.shape} for {name!r}"
            )
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in layer tensor {name!r}")
        w -= np.asarray(g, dtype=w.dtype) * w.dtype.type(lr)
    return params


# ---------------------------------------------------------------------------
# dataset construction

@dataclass
class PropagationSample:
    """One 5-slice training window in propagation order."""

    anchor_slice: np.ndarray      # (h, w)
    anchor_mask: np.ndarray       # (h, w) ground truth
    lookahead_slices: np.ndarray  # (4, h, w)
    lookahead_masks: np.ndarray   # (4, h, w) ground truth


def make_window(volume_slices, gt_masks, anchor, direction):
    """Build one propagation sample; rejects windows past the volume."""
    nz = volume_slices.shape[0]
    d = 1 if direction == "up" else -1
    look = [anchor + d * k for k in (1, 2, 3, 4)]
    if anchor < 0 or anchor >= nz or look[-1] < 0 or look[-1] >= nz:
        raise IndexError(
            f"window anchored at {anchor} ({direction}) extends past the "
            f"volume bounds [0, {nz - 1}]"
        )
    return PropagationSample(
        anchor_slice=volume_slices[anchor],
        anchor_mask=gt_masks[anchor],
        lookahead_slices=volume_slices[look],
        lookahead_masks=gt_masks[look],
    )


def build_propagation_dataset(volume_slices, gt_masks, base_index):
    """All upward and downward 5-slice windows at or below the base.

    Downward windows mirror the slice order, so one network serves both
    propagation directions.
    """
    samples = []
    for anchor in range(0, base_index - 3):
        samples.append(make_window(volume_slices, gt_masks, anchor, "up"))
    for anchor in range(4, base_index + 1):
        samples.append(make_window(volume_slices, gt_masks, anchor, "down"))
    return samples


def build_init_dataset(volume_slices, gt_masks, base_index):
    """(slice, mask) pairs below the base, excluding the top and bottom 1/6."""
    n = base_index + 1
    k = n // 6
    return [(volume_slices[i], gt_masks[i]) for i in range(k, n - k)]


# ---------------------------------------------------------------------------
# training loops

def _should_log(it, iterations, every):
    return it % every == 0 or it == iterations


def _train(kind, forward_cached, backward, get_sample, cfg, iterations,
           checkpoint_dir, progress=None):
    params = init_parameters(kind, seed=cfg.seed)
    scales = params.arch.scales
    log = LossLog(scales)
    rng = np.random.default_rng(cfg.seed)
    for it in range(1, iterations + 1):
        xs, gts = [], []
        for _ in range(cfg.batch_size):
            x, gt = get_sample(rng)
            xs.append(x)
            gts.append(gt)
        x = np.stack(xs).astype(np.float32)
        gt = np.stack(gts)
        masks, caches = forward_cached(x, params, "train")
        total, breakdown, dmasks = multiscale_loss_with_grad(
            masks, gt, cfg.loss, kind=kind
        )
        if not np.isfinite(total):
            raise TrainingDiverged(f"non-finite loss at iteration {it}", iteration=it)
        grads = backward(dmasks, caches, params)
        try:
            sgd_step(params, grads, cfg.learning_rate)
        except TrainingDiverged as e:
            raise TrainingDiverged(f"{e} at iteration {it}", iteration=it) from e
        if _should_log(it, iterations, cfg.log_every):
            log.append(it, total, breakdown)
            if progress:
                progress(it, total)
        if checkpoint_dir and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            save_checkpoint(params, f"{checkpoint_dir}/{kind}_iter{it:08d}.cseg")
    return params, log


def train_init(dataset, cfg, checkpoint_dir=None, progress=None):
    """Train the initialization network on (slice, mask) pairs."""
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    iterations = cfg.iterations or INIT_ITERATIONS_DEFAULT

    def get_sample(rng):
        sl, mask = dataset[int(rng.integers(len(dataset)))]
        if cfg.augmentation.enabled:
            imgs, msks = augment_sample(sl[None], mask[None], cfg.augmentation, rng)
            sl, mask = imgs[0], msks[0]
        return sl[None], mask[None]  # add the channel axis

    return _train("init", networks.init_net_forward_cached,
                  networks.init_net_backward, get_sample, cfg, iterations,
                  checkpoint_dir, progress)


def train_prop(dataset, cfg, checkpoint_dir=None, progress=None):
    """Train the propagation network on 5-slice windows (teacher forcing:
    the ground-truth anchor mask is fed as input context)."""
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    iterations = cfg.iterations or PROP_ITERATIONS_DEFAULT

    def get_sample(rng):
        s = dataset[int(rng.integers(len(dataset)))]
        images = np.concatenate([s.anchor_slice[None], s.lookahead_slices])
        masks = np.concatenate([s.anchor_mask[None], s.lookahead_masks])
        if cfg.augmentation.enabled:
            images, masks = augment_sample(images, masks, cfg.augmentation, rng)
        stack = np.concatenate([images[:1], masks[:1], images[1:]])  # 6 channels
        return stack, masks[1:]

    def forward_cached(x, params, mode):
        return networks.prop_net_forward_cached(x, params, mode)

    return _train("propagation", forward_cached, networks.prop_net_backward,
                  get_sample, cfg, iterations, checkpoint_dir, progress)
