"""Dense-tensor layer primitives with paired forward/backward passes.

Tensors are plain numpy arrays laid out batch x channel x height x width.
Float64 is used throughout the test suite (finite-difference checks need
the headroom); float32 is the production dtype. Each op computes in the
dtype it is handed.

There is no computation graph: every forward has an explicit companion
backward, and the network module wires them together by hand.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when operand shapes are mutually inconsistent."""


@dataclass
class LayerGradients:
    """Gradients produced by one backward pass."""

    input_grad: np.ndarray
    param_grads: dict = field(default_factory=dict)


@dataclass
class RunningStats:
    """Per-channel running mean/variance for batch norm inference."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def initial(cls, channels, dtype=np.float64):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    def copy(self):
        return RunningStats(self.mean.copy(), self.var.copy())


def _require_4d(x, name="input"):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4D (n,c,h,w), got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# conv2d

def conv2d(x, weights, bias, stride=1, padding=0):
    """Cross-correlation with zero padding.

    Output spatial size is floor((H + 2*padding - kH)/stride) + 1.
    """
    x = _require_4d(x)
    weights = _require_4d(weights, "weights")
    bias = np.asarray(bias)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    co, ci, kh, kw = weights.shape
    if x.shape[1] != ci:
        raise ShapeError(
            f"input has {x.shape[1]} channels but weights expect {ci}"
        )
    if bias.shape != (co,):
        raise ShapeError(f"bias must have shape ({co},), got {bias.shape}")
    ho = (x.shape[2] + 2 * padding - kh) // stride + 1
    wo = (x.shape[3] + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"kernel {kh}x{kw} with padding {padding} does not fit input "
            f"{x.shape[2]}x{x.shape[3]}"
        )
    xp = _pad2d(x, padding)
    return kernels.conv_forward(xp, weights, bias, stride)


def conv2d_backward(dy, x, weights, stride=1, padding=0):
    """Gradients of conv2d w.r.t. input, weights and bias."""
    return _conv2d_backward_padded(dy, _pad2d(x, padding), weights, stride, padding)


def _conv2d_backward_padded(dy, xp, weights, stride, padding):
    """Backward taking the already padded input (reused from forward)."""
    dy = _require_4d(dy, "dy")
    kh, kw = weights.shape[2], weights.shape[3]
    if stride == 1 and padding <= kh - 1 and padding <= kw - 1:
        # stride-1 input gradient is itself a convolution: correlate dy
        # (padded by k-1-padding) with the spatially flipped kernel,
        # in/out channels swapped
        wflip = np.ascontiguousarray(
            weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        )
        dyp = _pad2d_hw(dy, kh - 1 - padding, kw - 1 - padding)
        zero_bias = np.zeros(weights.shape[1], dtype=dy.dtype)
        dx = kernels.conv_forward(dyp, wflip, zero_bias, 1)
    else:
        dxp = kernels.conv_backward_input(dy, weights, stride, xp.shape)
        dx = _unpad2d(dxp, padding)
    dw, db = kernels.conv_backward_weights(xp, dy, stride, (kh, kw))
    return LayerGradients(dx, {"weights": dw, "bias": db})


def _pad2d(x, padding):
    return _pad2d_hw(x, padding, padding)


def _pad2d_hw(x, ph, pw):
    if ph == 0 and pw == 0:
        return np.ascontiguousarray(x)
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    out[:, :, ph:ph + h, pw:pw + w] = x
    return out


def _unpad2d(x, padding):
    if padding == 0:
        return x
    return np.ascontiguousarray(x[:, :, padding:-padding, padding:-padding])


# ---------------------------------------------------------------------------
# batch norm

def batch_norm(x, gamma, beta, running, mode, momentum=0.9, epsilon=1e-5):
    """Per-channel normalization.

    Train mode normalizes by batch statistics and updates `running` in
    place: new = momentum * old + (1 - momentum) * batch. Inference mode
    normalizes by the running statistics. Returns (output, cache); the
    cache feeds batch_norm_backward.
    """
    x = _require_4d(x)
    c = x.shape[1]
    gamma, beta = np.asarray(gamma), np.asarray(beta)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},)")
    if running.mean.shape != (c,) or running.var.shape != (c,):
        raise ShapeError(f"running stats must have shape ({c},)")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    reduce_n = x.shape[0] * x.shape[2] * x.shape[3]
    if reduce_n == 0:
        raise ShapeError("batch norm needs a non-empty batch x spatial extent")
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running.mean[:] = momentum * running.mean + (1.0 - momentum) * mean
        running.var[:] = momentum * running.var + (1.0 - momentum) * var
    elif mode == "inference":
        mean, var = running.mean, running.var
    else:
        raise ValueError(f"mode must be 'train' or 'inference', got {mode!r}")
    inv_std = (1.0 / np.sqrt(var + epsilon)).astype(x.dtype)
    xhat = x - mean.astype(x.dtype)[None, :, None, None]
    xhat *= inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat
    y += beta[None, :, None, None]
    cache = (xhat, inv_std, gamma, mode, reduce_n)
    return y, cache


def batch_norm_backward(dy, cache):
    """Gradients w.r.t. input, gamma, beta."""
    xhat, inv_std, gamma, mode, n = cache
    dy = _require_4d(dy, "dy")
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    g_inv = (gamma * inv_std).astype(dy.dtype)[None, :, None, None]
    if mode == "inference":
        dx = dy * g_inv
    else:
        # batch statistics depend on x, so subtract the mean-coupling terms
        dx = dy - (dbeta / n).astype(dy.dtype)[None, :, None, None]
        dx -= xhat * (dgamma / n).astype(dy.dtype)[None, :, None, None]
        dx *= g_inv
    return LayerGradients(dx, {"gamma": dgamma, "beta": dbeta})


# ---------------------------------------------------------------------------
# elementwise activations

def leaky_relu(x, slope=0.25):
    x = np.asarray(x)
    if 0 <= slope <= 1:
        return np.maximum(x, x * x.dtype.type(slope))
    return np.where(x >= 0, x, slope * x)


def leaky_relu_backward(dy, x, slope=0.25):
    dx = np.array(dy, copy=True)
    np.multiply(dx, dx.dtype.type(slope), out=dx, where=np.asarray(x) < 0)
    return LayerGradients(dx)


def sigmoid(x):
    """Numerically safe logistic: finite and strictly inside (0,1)."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dy, y):
    """Backward from the forward output y = sigmoid(x)."""
    return LayerGradients(dy * y * (1.0 - y))


# ---------------------------------------------------------------------------
# rescaling

def downscale(x, factor):
    """Average pooling over factor x factor blocks."""
    x = _require_4d(x)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"spatial extent {h}x{w} not divisible by factor {factor}")
    if factor == 1:
        return x.copy()
    return x.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))


def downscale_backward(dy, factor):
    """Distribute each block's gradient uniformly over the block."""
    dy = _require_4d(dy, "dy")
    if factor == 1:
        return LayerGradients(dy.copy())
    g = dy / (factor * factor)
    return LayerGradients(np.repeat(np.repeat(g, factor, axis=2), factor, axis=3))


def upscale(x, factor):
    """Nearest-neighbor repetition along both spatial axes."""
    x = _require_4d(x)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    return np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)


def upscale_backward(dy, factor):
    """Sum gradients over each replicated block."""
    dy = _require_4d(dy, "dy")
    if factor == 1:
        return LayerGradients(dy.copy())
    n, c, h, w = dy.shape
    g = dy.reshape(n, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))
    return LayerGradients(g)


# ---------------------------------------------------------------------------
# channel concat

def concat_channels(a, b):
    a, b = _require_4d(a, "a"), _require_4d(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(
            f"batch/spatial extents must match: {a.shape} vs {b.shape}"
        )
    return np.concatenate([a, b], axis=1)


def split_channels(y, channels_a):
    """Inverse of concat_channels; also serves as its backward."""
    y = _require_4d(y)
    return y[:, :channels_a], y[:, channels_a:]
