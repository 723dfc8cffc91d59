"""Binary checkpoint format ("CSEG").

Layout, all integers little-endian:

    magic            4 bytes  b"CSEG"
    format_version   uint32
    network_kind     uint8    (0 = init, 1 = propagation)
    arch block       uint32 length + UTF-8 JSON of the Architecture
    tensor count     uint32
    per tensor:      uint16 name length + UTF-8 name,
                     uint8 ndim, ndim x uint32 extents,
                     float32 data

Tensors are written in sorted name order (learnables plus batch-norm
running stats as <prefix>.bn<i>.running_mean / .running_var), so a given
parameter set always serializes to identical bytes.
"""

import struct

import numpy as np

from .architecture import Architecture, INIT_KIND, PROP_KIND
from .layers import RunningStats
from .networks import FORMAT_VERSION, ModelParameters

MAGIC = b"CSEG"
_KIND_CODE = {INIT_KIND: 0, PROP_KIND: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


class CheckpointError(ValueError):
    """Raised for unreadable, corrupt, or mismatched checkpoint files."""


def _all_arrays(params):
    arrays = dict(params.tensors)
    for name, rs in params.running.items():
        arrays[f"{name}.running_mean"] = rs.mean
        arrays[f"{name}.running_var"] = rs.var
    return arrays


def save_checkpoint(params, path):
    """Write parameters as single-precision tensors; returns the path."""
    arch_json = params.arch.to_json().encode()
    arrays = _all_arrays(params)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", params.format_version))
        f.write(struct.pack("<B", _KIND_CODE[params.network_kind]))
        f.write(struct.pack("<I", len(arch_json)))
        f.write(arch_json)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name], dtype="<f4")
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", a.ndim))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(a.tobytes())
    return path


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected_kind=None):
    """Read a checkpoint; optionally enforce the network kind."""
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a CSEG checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format_version {version} unsupported (expected {FORMAT_VERSION})"
        )
    (kind_code,) = r.unpack("<B")
    if kind_code not in _CODE_KIND:
        raise CheckpointError(f"{path}: unknown network kind code {kind_code}")
    kind = _CODE_KIND[kind_code]
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(
            f"{path}: checkpoint holds a {kind} network, expected {expected_kind}"
        )
    (arch_len,) = r.unpack("<I")
    try:
        arch = Architecture.from_json(r.take(arch_len).decode())
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: bad architecture block ({e})") from e
    if arch.kind != kind:
        raise CheckpointError(f"{path}: architecture kind disagrees with header")
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape)) if shape else 1
        buf = r.take(4 * n)
        arrays[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes")

    params = ModelParameters(network_kind=kind, arch=arch, format_version=version)
    running_means = {}
    for name, a in arrays.items():
        if name.endswith(".running_mean"):
            running_means[name[: -len(".running_mean")]] = a
        elif name.endswith(".running_var"):
            continue
        else:
            params.tensors[name] = a
    for base, mean in running_means.items():
        var = arrays.get(f"{base}.running_var")
        if var is None:
            raise CheckpointError(f"{path}: {base} has running_mean but no running_var")
        params.running[base] = RunningStats(mean, var)
    _validate_against_arch(params, path)
    return params


def _validate_against_arch(params, path):
    from .networks import init_parameters

    expected = init_parameters(params.network_kind, seed=0, arch=params.arch)
    exp_arrays = _all_arrays(expected)
    got_arrays = _all_arrays(params)
    if set(exp_arrays) != set(got_arrays):
        missing = sorted(set(exp_arrays) - set(got_arrays))
        extra = sorted(set(got_arrays) - set(exp_arrays))
        raise CheckpointError(
            f"{path}: tensor names disagree with architecture "
            f"(missing {missing[:3]}, unexpected {extra[:3]})"
        )
    for name, a in exp_arrays.items():
        if got_arrays[name].shape != a.shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {got_arrays[name].shape}, "
                f"expected {a.shape}"
            )
