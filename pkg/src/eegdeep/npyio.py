"""Reader and writer for a strict subset of the NPY v1.0 array format.

Supported: version 1.0, little-endian ``<f4`` / ``<f8`` payloads, C order,
rank <= 3.  Anything else is rejected with an :class:`NpyFormatError` that
carries the byte offset of the offending field.
"""

import ast
import os
import struct

import numpy as np

MAGIC = b"\x93NUMPY"
_PREFIX_LEN = len(MAGIC) + 2 + 2  # magic, version, header length
_ALIGN = 64
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class NpyFormatError(ValueError):
    """Malformed or unsupported NPY content."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BadMagicError(NpyFormatError):
    pass


class UnsupportedVersionError(NpyFormatError):
    pass


class BadHeaderError(NpyFormatError):
    pass


class UnsupportedDtypeError(NpyFormatError):
    pass


class FortranOrderError(NpyFormatError):
    pass


class TruncatedPayloadError(NpyFormatError):
    pass


def parse_npy(buf):
    """Decode NPY bytes into a float64 array."""
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise BadMagicError("missing \\x93NUMPY magic", 0)
    if len(buf) < _PREFIX_LEN:
        raise TruncatedPayloadError("file ends inside the preamble", len(buf))
    major, minor = buf[6], buf[7]
    if (major, minor) != (1, 0):
        raise UnsupportedVersionError(f"version {major}.{minor} not supported, need 1.0", 6)
    (header_len,) = struct.unpack("<H", buf[8:10])
    data_start = _PREFIX_LEN + header_len
    if len(buf) < data_start:
        raise TruncatedPayloadError("file ends inside the header", len(buf))

    try:
        header = ast.literal_eval(buf[_PREFIX_LEN:data_start].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise BadHeaderError(f"header is not a Python literal: {exc}", _PREFIX_LEN) from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise BadHeaderError("header must be a dict with keys descr, fortran_order, shape", _PREFIX_LEN)

    descr = header["descr"]
    if descr not in _DTYPES:
        raise UnsupportedDtypeError(f"dtype {descr!r} not supported (need '<f4' or '<f8')", _PREFIX_LEN)
    if header["fortran_order"] is not False:
        raise FortranOrderError("fortran_order=True arrays are not supported", _PREFIX_LEN)
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or len(shape) > 3
        or not all(isinstance(d, int) and d >= 0 for d in shape)
    ):
        raise BadHeaderError(f"shape {shape!r} must be a tuple of at most 3 non-negative ints", _PREFIX_LEN)

    dtype = _DTYPES[descr]
    count = int(np.prod(shape, dtype=np.int64))
    need = count * dtype.itemsize
    have = len(buf) - data_start
    if have < need:
        raise TruncatedPayloadError(f"payload has {have} bytes, header implies {need}", len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=data_start)
    return data.astype(np.float64).reshape(shape)


def read_npy(path):
    with open(path, "rb") as fh:
        return parse_npy(fh.read())


def encode_npy(t):
    t = np.ascontiguousarray(t, dtype="<f8")
    if t.ndim > 3:
        raise ValueError(f"rank {t.ndim} > 3 is not supported")
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': %r, }" % (tuple(int(d) for d in t.shape),)
    # pad with spaces so the payload starts on a 64-byte boundary, newline-terminated
    pad = -(_PREFIX_LEN + len(header) + 1) % _ALIGN
    header = header + " " * pad + "\n"
    return MAGIC + bytes([1, 0]) + struct.pack("<H", len(header)) + header.encode("latin1") + t.tobytes()


def write_npy(t, path):
    data = encode_npy(t)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
