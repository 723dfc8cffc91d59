"""Binary volume/mask file formats (CVOL / CMSK / CPRB).

Shared little-endian header:

    magic       4 bytes ("CVOL" volume, "CMSK" binary mask, "CPRB"
                probability mask)
    version     uint32
    dims        3 x uint32 (nx, ny, nz)
    spacing     3 x float32 (sx, sy, sz) mm
    base_index  uint32
    crop_box    6 x uint32, all 0xFFFFFFFF when absent

Payload follows in x-fastest order: float32 voxels for CVOL/CPRB, one
byte per voxel (0/1) for CMSK. In-memory arrays are (nz, ny, nx).
"""

import struct

import numpy as np

from .volume import Volume

FORMAT_VERSION = 1
MAGIC_VOLUME = b"CVOL"
MAGIC_MASK = b"CMSK"
MAGIC_PROB = b"CPRB"
_NO_CROP = (0xFFFFFFFF,) * 6
_HEADER = struct.Struct("<4sI3I3fI6I")


class FileFormatError(ValueError):
    """Raised for malformed volume/mask files."""


def _write_header(f, magic, shape, spacing, base_index, crop_box):
    nz, ny, nx = shape
    crop = _NO_CROP if crop_box is None else tuple(int(c) for c in crop_box)
    f.write(_HEADER.pack(magic, FORMAT_VERSION, nx, ny, nz,
                         *[float(s) for s in spacing], int(base_index), *crop))


def _read_header(path, f, expect_magic):
    buf = f.read(_HEADER.size)
    if len(buf) != _HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, nx, ny, nz, sx, sy, sz, base, *crop = _HEADER.unpack(buf)
    if magic != expect_magic:
        raise FileFormatError(
            f"{path}: bad magic {magic!r}, expected {expect_magic.decode()}"
        )
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    crop_box = None if tuple(crop) == _NO_CROP else tuple(crop)
    return (nz, ny, nx), (sx, sy, sz), base, crop_box


def _read_payload(path, f, shape, dtype):
    n = int(np.prod(shape))
    item = np.dtype(dtype).itemsize
    buf = f.read()
    if len(buf) != n * item:
        raise FileFormatError(
            f"{path}: payload is {len(buf)} bytes, expected {n * item}"
        )
    return np.frombuffer(buf, dtype=dtype).reshape(shape)


def write_volume(path, v):
    with open(path, "wb") as f:
        _write_header(f, MAGIC_VOLUME, v.data.shape, v.spacing, v.base_index,
                      v.crop_box)
        f.write(np.ascontiguousarray(v.data, dtype="<f4").tobytes())
    return path


def read_volume(path):
    with open(path, "rb") as f:
        shape, spacing, base, crop_box = _read_header(path, f, MAGIC_VOLUME)
        data = _read_payload(path, f, shape, "<f4").astype(np.float64)
    return Volume(data=data, spacing=spacing, base_index=base, crop_box=crop_box)


def write_mask(path, mask, spacing, base_index, crop_box=None):
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("binary mask payload must contain only 0/1")
    with open(path, "wb") as f:
        _write_header(f, MAGIC_MASK, mask.shape, spacing, base_index, crop_box)
        f.write(np.ascontiguousarray(mask, dtype=np.uint8).tobytes())
    return path


def read_mask(path):
    with open(path, "rb") as f:
        shape, spacing, base, crop_box = _read_header(path, f, MAGIC_MASK)
        mask = _read_payload(path, f, shape, np.uint8)
    if not np.all((mask == 0) | (mask == 1)):
        raise FileFormatError(f"{path}: binary mask payload has non-0/1 bytes")
    return mask.copy(), spacing, base, crop_box


def write_prob(path, prob, spacing, base_index, crop_box=None):
    with open(path, "wb") as f:
        _write_header(f, MAGIC_PROB, prob.shape, spacing, base_index, crop_box)
        f.write(np.ascontiguousarray(prob, dtype="<f4").tobytes())
    return path


def read_prob(path):
    with open(path, "rb") as f:
        shape, spacing, base, crop_box = _read_header(path, f, MAGIC_PROB)
        prob = _read_payload(path, f, shape, "<f4").astype(np.float64)
    return prob, spacing, base, crop_box
