"""Binary checkpoint IO: named f64 tensors, little-endian, CRC32 trailer."""

import struct
import zlib

import numpy as np

from ..errors import ChecksumMismatch, VersionMismatch

MAGIC = b"SPUN-CK v1"


def save_ckpt(store_or_state, path):
    """Write parameters (a ParamStore or a name->array dict) to ``path``.

    Layout: magic, u32 tensor count, then per tensor (sorted by name):
    u32 name length + utf-8 name, u32 rank, u64 dims, raw little-endian f64
    payload; a CRC32 of everything precedes EOF.  Reload is bit-exact.
    """
    if hasattr(store_or_state, "state_dict"):
        state = store_or_state.state_dict()
    else:
        state = dict(store_or_state)
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", len(state))
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        nb = name.encode("utf-8")
        buf += struct.pack("<I", len(nb))
        buf += nb
        buf += struct.pack("<I", arr.ndim)
        for d in arr.shape:
            buf += struct.pack("<Q", d)
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def load_ckpt(path):
    """Read a checkpoint into a name->array dict.

    Raises VersionMismatch on a wrong magic and ChecksumMismatch on a bad
    CRC or on any structural damage (truncation, impossible sizes).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC):
        raise ChecksumMismatch("file shorter than the magic header")
    if data[: len(MAGIC)] != MAGIC:
        raise VersionMismatch(f"bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    if len(data) < len(MAGIC) + 8:
        raise ChecksumMismatch("truncated checkpoint")
    (crc_stored,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc_stored:
        raise ChecksumMismatch("CRC32 mismatch")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data) - 4:
            raise ChecksumMismatch("checkpoint structure overruns payload")
        out = data[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4))
    state = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        size = int(np.prod(dims)) if dims else 1
        payload = take(8 * size)
        state[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    if pos != len(data) - 4:
        raise ChecksumMismatch("trailing bytes after declared tensors")
    return state


def load_into(store, path):
    """Load a checkpoint into an existing ParamStore (names/shapes checked)."""
    store.load_state_dict(load_ckpt(path))
