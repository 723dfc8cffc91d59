"""The initialization and spatial propagation networks.

Both are coarse-to-fine stacks of sub-networks: the coarsest scale sees
only the (downscaled) input, every finer scale sees the input at its own
resolution concatenated with the upscaled mask from the previous scale.
The initialization network maps one slice to masks at 32/64/128; the
propagation network maps (anchor slice, anchor mask, 4 lookahead slices)
to 4-channel mask stacks at 64/128.

Backward passes are wired by hand, including the gradient flowing from a
finer sub-network back into the coarser one through the mask hand-off.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, layers
from .architecture import Architecture, default_architecture, INIT_KIND, PROP_KIND
from .layers import RunningStats, ShapeError

FORMAT_VERSION = 1


@dataclass
class ModelParameters:
    """All learnable tensors plus batch-norm running statistics."""

    network_kind: str
    arch: Architecture
    tensors: dict = field(default_factory=dict)
    running: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def learnable_names(self):
        return sorted(self.tensors)

    def copy(self):
        return ModelParameters(
            network_kind=self.network_kind,
            arch=self.arch,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            running={k: v.copy() for k, v in self.running.items()},
            format_version=self.format_version,
        )

    def astype(self, dtype):
        out = self.copy()
        out.tensors = {k: v.astype(dtype) for k, v in out.tensors.items()}
        out.running = {
            k: RunningStats(v.mean.astype(dtype), v.var.astype(dtype))
            for k, v in out.running.items()
        }
        return out

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype


@dataclass
class PropagationInput:
    """Inputs for one propagation step, all at the finest resolution."""

    anchor_slice: np.ndarray      # (1, h, w)
    anchor_mask: np.ndarray       # (1, h, w), values in [0, 1]
    lookahead_slices: np.ndarray  # (4, h, w)

    def validate(self, io_size):
        a = np.asarray(self.anchor_slice)
        m = np.asarray(self.anchor_mask)
        s = np.asarray(self.lookahead_slices)
        if a.shape != (1, io_size, io_size) or m.shape != (1, io_size, io_size):
            raise ShapeError(
                f"anchor slice/mask must be (1,{io_size},{io_size}), "
                f"got {a.shape} and {m.shape}"
            )
        if s.shape != (4, io_size, io_size):
            raise ShapeError(
                f"lookahead slices must be (4,{io_size},{io_size}), got {s.shape}"
            )
        if m.size and (m.min() < 0 or m.max() > 1):
            raise ValueError("anchor mask values must lie in [0, 1]")

    def to_stack(self, dtype):
        """Channel-stack the inputs: slice, mask, then the 4 lookaheads."""
        return np.concatenate(
            [self.anchor_slice, self.anchor_mask, self.lookahead_slices], axis=0
        ).astype(dtype, copy=False)[None]


def init_parameters(kind, seed, dtype=np.float32, arch=None):
    """Deterministic fresh parameters: He-style conv weights, identity BN."""
    arch = arch or default_architecture(kind)
    if arch.kind != kind:
        raise ValueError(f"architecture kind {arch.kind!r} != requested {kind!r}")
    rng = np.random.default_rng(seed)
    params = ModelParameters(network_kind=kind, arch=arch)
    for spec in arch.subnets():
        cin = spec.in_channels
        for i, cout in enumerate(spec.conv_channels):
            fan_in = cin * spec.filter_size * spec.filter_size
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                           (cout, cin, spec.filter_size, spec.filter_size))
            params.tensors[f"{spec.prefix}.conv{i}.weights"] = w.astype(dtype)
            params.tensors[f"{spec.prefix}.conv{i}.bias"] = np.zeros(cout, dtype=dtype)
            params.tensors[f"{spec.prefix}.bn{i}.gamma"] = np.ones(cout, dtype=dtype)
            params.tensors[f"{spec.prefix}.bn{i}.beta"] = np.zeros(cout, dtype=dtype)
            params.running[f"{spec.prefix}.bn{i}"] = RunningStats.initial(cout, dtype)
            cin = cout
        w = rng.normal(0.0, np.sqrt(2.0 / cin), (spec.out_channels, cin, 1, 1))
        params.tensors[f"{spec.prefix}.head.weights"] = w.astype(dtype)
        params.tensors[f"{spec.prefix}.head.bias"] = np.zeros(
            spec.out_channels, dtype=dtype
        )
    return params


# ---------------------------------------------------------------------------
# one sub-network

def _subnet_forward(x, params, spec, mode):
    arch = params.arch
    pad = spec.filter_size // 2
    t = params.tensors
    caches = []
    h = x
    for i in range(len(spec.conv_channels)):
        p = f"{spec.prefix}.conv{i}"
        hp = layers._pad2d(h, pad)  # kept in the cache for the backward pass
        z = kernels.conv_forward(hp, t[f"{p}.weights"], t[f"{p}.bias"], 1)
        zn, bn_cache = layers.batch_norm(
            z,
            t[f"{spec.prefix}.bn{i}.gamma"],
            t[f"{spec.prefix}.bn{i}.beta"],
            params.running[f"{spec.prefix}.bn{i}"],
            mode,
            momentum=arch.bn_momentum,
            epsilon=arch.bn_epsilon,
        )
        a = layers.leaky_relu(zn, arch.leaky_slope)
        caches.append((hp, bn_cache, zn))
        h = a
    head = f"{spec.prefix}.head"
    z = kernels.conv_forward(np.ascontiguousarray(h), t[f"{head}.weights"],
                             t[f"{head}.bias"], 1)
    y = layers.sigmoid(z)
    caches.append((h, y))
    return y, caches


def _subnet_backward(dy, caches, params, spec):
    arch = params.arch
    pad = spec.filter_size // 2
    t = params.tensors
    grads = {}
    head_in, y = caches[-1]
    dz = layers.sigmoid_backward(dy, y).input_grad
    head = f"{spec.prefix}.head"
    g = layers._conv2d_backward_padded(dz, head_in, t[f"{head}.weights"], 1, 0)
    grads[f"{head}.weights"] = g.param_grads["weights"]
    grads[f"{head}.bias"] = g.param_grads["bias"]
    dh = g.input_grad
    for i in reversed(range(len(spec.conv_channels))):
        conv_in_padded, bn_cache, bn_out = caches[i]
        da = layers.leaky_relu_backward(dh, bn_out, arch.leaky_slope).input_grad
        bg = layers.batch_norm_backward(da, bn_cache)
        grads[f"{spec.prefix}.bn{i}.gamma"] = bg.param_grads["gamma"]
        grads[f"{spec.prefix}.bn{i}.beta"] = bg.param_grads["beta"]
        p = f"{spec.prefix}.conv{i}"
        cg = layers._conv2d_backward_padded(
            bg.input_grad, conv_in_padded, t[f"{p}.weights"], 1, pad
        )
        grads[f"{p}.weights"] = cg.param_grads["weights"]
        grads[f"{p}.bias"] = cg.param_grads["bias"]
        dh = cg.input_grad
    return dh, grads


# ---------------------------------------------------------------------------
# full networks

def _coarse_to_fine_forward(x, params, mode):
    """Shared multi-scale wiring; x is the full-resolution input stack."""
    arch = params.arch
    specs = arch.subnets()
    finest = arch.io_size
    masks, caches, prev_mask = {}, {}, None
    for spec in specs:
        factor = finest // spec.io_size
        xs = layers.downscale(x, factor) if factor > 1 else x
        if spec.takes_coarse_mask:
            xin = layers.concat_channels(xs, layers.upscale(prev_mask, 2))
        else:
            xin = xs
        m, c = _subnet_forward(xin, params, spec, mode)
        masks[spec.io_size] = m
        caches[spec.io_size] = c
        prev_mask = m
    return masks, caches


def _coarse_to_fine_backward(dmasks, caches, params):
    arch = params.arch
    specs = arch.subnets()
    grads = {}
    carried = None  # gradient flowing into the next-coarser mask
    for spec in reversed(specs):
        d = np.asarray(dmasks[spec.io_size], dtype=params.dtype)
        if carried is not None:
            d = d + carried
        dxin, g = _subnet_backward(d, caches[spec.io_size], params, spec)
        grads.update(g)
        if spec.takes_coarse_mask:
            _, d_up = layers.split_channels(dxin, arch.input_channels)
            carried = layers.upscale_backward(d_up, 2).input_grad
        else:
            carried = None
    return grads


def _as_input_tensor(x, channels, io_size, dtype, what):
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != channels or x.shape[2:] != (io_size, io_size):
        raise ShapeError(
            f"{what} must be {channels}x{io_size}x{io_size} "
            f"(optionally batched), got shape {x.shape}"
        )
    return x.astype(dtype, copy=False)


def init_net_forward(sl, params, mode="inference"):
    """Segment one slice; returns {32: mask, 64: mask, 128: mask}."""
    masks, _ = init_net_forward_cached(sl, params, mode)
    return masks


def init_net_forward_cached(sl, params, mode="train"):
    if params.network_kind != INIT_KIND:
        raise ValueError(f"expected {INIT_KIND} parameters, got {params.network_kind}")
    x = _as_input_tensor(sl, params.arch.input_channels, params.arch.io_size,
                         params.dtype, "input slice")
    return _coarse_to_fine_forward(x, params, mode)


def init_net_backward(dmasks, caches, params):
    return _coarse_to_fine_backward(dmasks, caches, params)


def prop_net_forward(pinput, params, mode="inference"):
    """Predict the next 4 masks; returns {64: (n,4,64,64), 128: (n,4,128,128)}."""
    masks, _ = prop_net_forward_cached(pinput, params, mode)
    return masks


def prop_net_forward_cached(pinput, params, mode="train"):
    if params.network_kind != PROP_KIND:
        raise ValueError(f"expected {PROP_KIND} parameters, got {params.network_kind}")
    arch = params.arch
    if isinstance(pinput, PropagationInput):
        pinput.validate(arch.io_size)
        x = pinput.to_stack(params.dtype)
    else:
        x = _as_input_tensor(pinput, arch.input_channels, arch.io_size,
                             params.dtype, "propagation input stack")
    return _coarse_to_fine_forward(x, params, mode)


def prop_net_backward(dmasks, caches, params):
    return _coarse_to_fine_backward(dmasks, caches, params)


# ---------------------------------------------------------------------------
# inference adapters used by the volume pipeline

class InitPredictor:
    """Wraps parameters as slice -> finest-scale probability mask (h, w)."""

    def __init__(self, params):
        self.params = params

    def __call__(self, sl):
        masks = init_net_forward(sl, self.params, mode="inference")
        return masks[self.params.arch.io_size][0, 0]


class PropPredictor:
    """Wraps parameters as PropagationInput -> (4, h, w) probability masks."""

    def __init__(self, params):
        self.params = params

    def __call__(self, pinput):
        masks = prop_net_forward(pinput, self.params, mode="inference")
        return masks[self.params.arch.io_size][0]
