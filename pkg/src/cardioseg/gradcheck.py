"""Finite-difference verification of every backward pass.

Central differences at double precision (step 1e-5) against the analytic
gradients, reduced to a single max relative error per checked quantity.
This is the harness behind `cardioseg gradcheck` and large parts of the
test suite. The `corrupt` hook deliberately breaks one analytic gradient
so the negative path (detection and nonzero exit) stays testable.
"""

from dataclasses import dataclass

import numpy as np

from . import layers
from .loss import LossConfig, pixel_loss, pixel_loss_grad

FD_STEP = 1e-5
LOSS_FD_STEP = 1e-7  # the loss curvature near p' = b needs a finer step
LAYER_TOL = 1e-4
LOSS_TOL = 1e-6


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_err < self.tolerance


def fd_gradient(f, x, step=FD_STEP):
    """Central-difference gradient of scalar f w.r.t. array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        dn = f(x)
        flat[i] = orig
        gf[i] = (up - dn) / (2.0 * step)
    return g


def rel_error(analytic, numeric):
    """Max |a - n| normalized by the largest gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0),
                np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def _projection(rng, shape):
    return rng.normal(size=shape)


def _check_conv(rng, corrupt=False):
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3)) * 0.5
    b = rng.normal(size=4)
    r = _projection(rng, (2, 4, 8, 8))
    g = layers.conv2d_backward(r, x, w, stride=1, padding=1)
    dw = g.param_grads["weights"] + (1e-2 if corrupt else 0.0)
    results = [
        ("conv2d/input", g.input_grad,
         fd_gradient(lambda t: float((layers.conv2d(t, w, b, 1, 1) * r).sum()), x)),
        ("conv2d/weights", dw,
         fd_gradient(lambda t: float((layers.conv2d(x, t, b, 1, 1) * r).sum()), w)),
        ("conv2d/bias", g.param_grads["bias"],
         fd_gradient(lambda t: float((layers.conv2d(x, w, t, 1, 1) * r).sum()), b)),
    ]
    return [CheckResult(n, rel_error(a, f), LAYER_TOL) for n, a, f in results]


def _check_batch_norm(rng):
    x = rng.normal(size=(2, 3, 5, 5))
    gamma = rng.normal(size=3) + 1.5
    beta = rng.normal(size=3)
    r = _projection(rng, x.shape)

    def run(xx, gg, bb):
        stats = layers.RunningStats.initial(3)
        y, _ = layers.batch_norm(xx, gg, bb, stats, "train")
        return float((y * r).sum())

    stats = layers.RunningStats.initial(3)
    y, cache = layers.batch_norm(x, gamma, beta, stats, "train")
    g = layers.batch_norm_backward(r, cache)
    results = [
        ("batch_norm/input", g.input_grad,
         fd_gradient(lambda t: run(t, gamma, beta), x)),
        ("batch_norm/gamma", g.param_grads["gamma"],
         fd_gradient(lambda t: run(x, t, beta), gamma)),
        ("batch_norm/beta", g.param_grads["beta"],
         fd_gradient(lambda t: run(x, gamma, t), beta)),
    ]
    return [CheckResult(n, rel_error(a, f), LAYER_TOL) for n, a, f in results]


def _check_elementwise(rng):
    results = []

    x = rng.normal(size=(2, 2, 6, 6)) * 2.0
    x = np.where(np.abs(x) < 10 * FD_STEP, x + 0.1, x)  # stay off the kink
    r = _projection(rng, x.shape)
    a = layers.leaky_relu_backward(r, x).input_grad
    f = fd_gradient(lambda t: float((layers.leaky_relu(t) * r).sum()), x)
    results.append(CheckResult("leaky_relu", rel_error(a, f), LAYER_TOL))

    x = rng.normal(size=(1, 2, 5, 5))
    r = _projection(rng, x.shape)
    y = layers.sigmoid(x)
    a = layers.sigmoid_backward(r, y).input_grad
    f = fd_gradient(lambda t: float((layers.sigmoid(t) * r).sum()), x)
    results.append(CheckResult("sigmoid", rel_error(a, f), LAYER_TOL))

    x = rng.normal(size=(1, 2, 8, 8))
    r = _projection(rng, (1, 2, 4, 4))
    a = layers.downscale_backward(r, 2).input_grad
    f = fd_gradient(lambda t: float((layers.downscale(t, 2) * r).sum()), x)
    results.append(CheckResult("downscale", rel_error(a, f), LAYER_TOL))

    x = rng.normal(size=(1, 2, 4, 4))
    r = _projection(rng, (1, 2, 8, 8))
    a = layers.upscale_backward(r, 2).input_grad
    f = fd_gradient(lambda t: float((layers.upscale(t, 2) * r).sum()), x)
    results.append(CheckResult("upscale", rel_error(a, f), LAYER_TOL))
    return results


def _check_pixel_loss(rng):
    cfg = LossConfig()
    worst = 0.0
    checked = 0
    h = LOSS_FD_STEP
    while checked < 200:
        p = float(np.clip(rng.uniform(0.0, 1.0), 2 * h, 1.0 - 2 * h))
        g = float(rng.integers(0, 2))
        pp = cfg.a * p + cfg.b
        # stay away from both branch boundaries for the finite differences
        if min(abs(abs(g - pp) - cfg.t), abs(pp - cfg.t), abs(pp - (1 - cfg.t))) < 1e-3:
            continue
        analytic = pixel_loss_grad(p, g, cfg)
        num = (pixel_loss(p + h, g, cfg) - pixel_loss(p - h, g, cfg)) / (2 * h)
        denom = max(abs(analytic), abs(num), 1.0)
        worst = max(worst, abs(analytic - num) / denom)
        checked += 1
    return [CheckResult("pixel_loss", worst, LOSS_TOL)]


def run_suite(seeds=(0, 1, 2, 3, 4), corrupt=None):
    """Run every check for each seed; returns the worst result per op."""
    worst = {}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        results = (
            _check_conv(rng, corrupt == "conv2d")
            + _check_batch_norm(rng)
            + _check_elementwise(rng)
            + _check_pixel_loss(rng)
        )
        for r in results:
            prev = worst.get(r.name)
            if prev is None or r.max_rel_err > prev.max_rel_err:
                worst[r.name] = r
    return [worst[k] for k in sorted(worst)]
