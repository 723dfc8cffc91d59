"""Convolution kernel backend selection.

The compiled Cython core is preferred when its extension imported cleanly;
otherwise the pure-numpy fallback takes over. `CARDIOSEG_PURE_PYTHON=1` in
the environment forces the fallback, and `use_backend()` switches at
runtime (used by the tests and the benchmark).
"""

import os

import numpy as np

from . import conv_numpy

try:
    from . import _convcore
except ImportError:
    _convcore = None

_FORCED = os.environ.get("CARDIOSEG_PURE_PYTHON", "") not in ("", "0")
_active = "numpy" if (_convcore is None or _FORCED) else "compiled"


def available_backends():
    return ("compiled", "numpy") if _convcore is not None else ("numpy",)


def backend_name():
    return _active


def use_backend(name):
    """Select 'compiled' or 'numpy'. Returns the previously active name."""
    global _active
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    previous = _active
    _active = name
    return previous


def _as_c(a):
    return np.ascontiguousarray(a)


def conv_forward(xp, w, b, stride):
    """Cross-correlate padded input `xp` (n,ci,hp,wp) with `w` (co,ci,kh,kw)."""
    if _active == "compiled":
        xp, w, b = _as_c(xp), _as_c(w), _as_c(b)
        n = xp.shape[0]
        co, _, kh, kw = w.shape
        ho = (xp.shape[2] - kh) // stride + 1
        wo = (xp.shape[3] - kw) // stride + 1
        out = np.empty((n, co, ho, wo), dtype=xp.dtype)
        _convcore.conv2d_forward(xp, w, b, stride, out)
        return out
    return conv_numpy.conv2d_forward(xp, w, b, stride)


def conv_backward_input(dy, w, stride, padded_shape):
    """Gradient w.r.t. the padded input; caller crops the padding off."""
    if _active == "compiled":
        dy, w = _as_c(dy), _as_c(w)
        dxp = np.zeros(padded_shape, dtype=dy.dtype)
        _convcore.conv2d_backward_input(dy, w, stride, dxp)
        return dxp
    return conv_numpy.conv2d_backward_input(dy, w, stride, padded_shape)


def conv_backward_weights(xp, dy, stride, kernel_hw):
    """Gradients w.r.t. weights and bias."""
    if _active == "compiled":
        xp, dy = _as_c(xp), _as_c(dy)
        co = dy.shape[1]
        ci = xp.shape[1]
        dw = np.zeros((co, ci) + tuple(kernel_hw), dtype=xp.dtype)
        db = np.zeros(co, dtype=xp.dtype)
        _convcore.conv2d_backward_weights(xp, dy, stride, dw, db)
        return dw, db
    return conv_numpy.conv2d_backward_weights(xp, dy, stride, kernel_hw)
