"""Binary file formats. All integers little-endian; every file ends with a
CRC32 (zlib polynomial) of all preceding bytes.

CDB1  descriptor database
    magic "CDB1" | u16 version=1 | u32 dim | u32 count | u16 tag_len | tag (UTF-8)
    count x (u64 id | 3 x f64 position | dim x f32 values) | u32 crc
LFM1  feature matrix
    magic "LFM1" | u16 version=1 | u32 d | u32 N | u8 dtype (0=f32, 1=f64)
    d x N payload, channel-major | u32 crc
LPC1  point cloud
    magic "LPC1" | u16 version=1 | u32 N | N x 3 f64 | u32 crc

Readers raise, in this order of checks: BadMagicError, VersionMismatchError,
TruncatedPayloadError, FormatError (trailing bytes / bad field), ChecksumError.
"""
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import BadMagicError, ChecksumError, FormatError, TruncatedPayloadError, VersionMismatchError

VERSION = 1
_CRC = struct.Struct("<I")


def _seal(body):
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def _open_frame(data, magic, header):
    """Validate magic, version and fixed header length; return header fields."""
    if bytes(data[:4]) != magic[:min(4, len(data))]:
        raise BadMagicError(f"bad magic: expected {magic!r}, got {bytes(data[:4])!r}")
    if len(data) < header.size + 4:
        raise TruncatedPayloadError(header.size + 4, len(data))
    fields = header.unpack_from(data)
    if fields[1] != VERSION:
        raise VersionMismatchError(f"version mismatch: file has {fields[1]}, reader supports {VERSION}")
    return fields


def _close_frame(data, expected):
    if len(data) < expected:
        raise TruncatedPayloadError(expected, len(data))
    if len(data) > expected:
        raise FormatError(f"trailing bytes: expected {expected} bytes, got {len(data)}")
    (stored,) = _CRC.unpack_from(data, expected - 4)
    actual = zlib.crc32(data[:expected - 4]) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumError(f"CRC32 mismatch: stored {stored:#010x}, computed {actual:#010x}")


# -- CDB1 -------------------------------------------------------------------

_CDB_HEADER = struct.Struct("<4sHIIH")


def cdb_record_dtype(dim):
    return np.dtype([("id", "<u8"), ("pos", "<f8", (3,)), ("values", "<f4", (dim,))])


def encode_cdb(dim, method_tag, ids, positions, values):
    tag = method_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise FormatError("method tag longer than 65535 bytes")
    recs = np.empty(len(ids), dtype=cdb_record_dtype(dim))
    recs["id"] = ids
    recs["pos"] = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    recs["values"] = np.asarray(values, dtype=np.float32).reshape(-1, dim)
    body = _CDB_HEADER.pack(b"CDB1", VERSION, dim, len(ids), len(tag)) + tag + recs.tobytes()
    return _seal(body)


def decode_cdb(data):
    """Return ``(dim, method_tag, ids, positions, values)``."""
    _, _, dim, count, tag_len = _open_frame(data, b"CDB1", _CDB_HEADER)
    start = _CDB_HEADER.size + tag_len
    rec = cdb_record_dtype(dim)
    _close_frame(data, start + count * rec.itemsize + 4)
    tag = bytes(data[_CDB_HEADER.size:start]).decode("utf-8")
    recs = np.frombuffer(data, dtype=rec, count=count, offset=start)
    return (dim, tag, recs["id"].astype(np.uint64), recs["pos"].copy(),
            np.ascontiguousarray(recs["values"]))


# -- LFM1 -------------------------------------------------------------------

_LFM_HEADER = struct.Struct("<4sHIIB")
_LFM_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def encode_lfm(x, dtype="f64"):
    code = {"f32": 0, "f64": 1}[dtype]
    x = np.ascontiguousarray(x, dtype=_LFM_DTYPES[code])
    d, n = x.shape
    return _seal(_LFM_HEADER.pack(b"LFM1", VERSION, d, n, code) + x.tobytes())


def decode_lfm(data):
    _, _, d, n, code = _open_frame(data, b"LFM1", _LFM_HEADER)
    if code not in _LFM_DTYPES:
        raise FormatError(f"unknown LFM1 dtype code {code}")
    dt = _LFM_DTYPES[code]
    _close_frame(data, _LFM_HEADER.size + d * n * dt.itemsize + 4)
    x = np.frombuffer(data, dtype=dt, count=d * n, offset=_LFM_HEADER.size)
    return x.reshape(d, n).copy()


# -- LPC1 -------------------------------------------------------------------

_LPC_HEADER = struct.Struct("<4sHI")


def encode_lpc(points):
    pts = np.ascontiguousarray(points, dtype="<f8")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise FormatError(f"point cloud must be (N, 3), got {pts.shape}")
    return _seal(_LPC_HEADER.pack(b"LPC1", VERSION, pts.shape[0]) + pts.tobytes())


def decode_lpc(data):
    _, _, n = _open_frame(data, b"LPC1", _LPC_HEADER)
    _close_frame(data, _LPC_HEADER.size + n * 24 + 4)
    return np.frombuffer(data, dtype="<f8", count=3 * n, offset=_LPC_HEADER.size).reshape(n, 3).copy()


def write_bytes(path, blob):
    Path(path).write_bytes(blob)


def read_bytes(path):
    return Path(path).read_bytes()


def save_features(path, x, dtype="f64"):
    write_bytes(path, encode_lfm(x, dtype))


def load_features(path):
    return decode_lfm(read_bytes(path))


def save_cloud(path, points):
    write_bytes(path, encode_lpc(points))


def load_cloud(path):
    return decode_lpc(read_bytes(path))
