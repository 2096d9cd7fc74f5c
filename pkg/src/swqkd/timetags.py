"""QTT1 binary timetag format: the contract between detection and postproc.

File layout (little-endian):

    offset  size  field
    ------  ----  --------------------------------------
    0       4     magic "QTT1"
    4       2     version (u16, currently 1)
    6       2     channel_count (u16)
    8       4     resolution_ps (u32, 1 = picosecond ticks)
    12      20    reserved, zero
    32      ...   16-byte records

Record layout (16 bytes, little-endian):

    offset  size  field
    ------  ----  --------------------------------------
    0       8     time_ps (u64)
    8       1     channel (u8; 0=A, 1=D, 2=R, 3=L)
    9       1     flags (u8; bit0 = truth-is-signal, simulation-only debug)
    10      6     reserved, zero

Within one channel, times are strictly increasing with gaps of at least
the detector dead time. A framed variant for streaming over stdin
prefixes each chunk of records with a u32 byte count.
"""

from __future__ import annotations

import io
import struct

import numpy as np

MAGIC = b"QTT1"
VERSION = 1
HEADER_SIZE = 32
RECORD_SIZE = 16
FLAG_TRUTH_SIGNAL = 0x01

TIMETAG_DTYPE = np.dtype([
    ("time_ps", "<u8"),
    ("channel", "u1"),
    ("flags", "u1"),
    ("reserved", "V6"),
])
assert TIMETAG_DTYPE.itemsize == RECORD_SIZE

_HEADER_STRUCT = struct.Struct("<4sHHI20s")


def make_records(times_ps, channels, flags=None) -> np.ndarray:
    """Pack arrays into the 16-byte record layout (times rounded to ps)."""
    times_ps = np.asarray(times_ps)
    n = len(times_ps)
    rec = np.zeros(n, dtype=TIMETAG_DTYPE)
    rec["time_ps"] = np.round(times_ps).astype(np.uint64)
    rec["channel"] = np.asarray(channels, dtype=np.uint8)
    if flags is not None:
        rec["flags"] = np.asarray(flags, dtype=np.uint8)
    return rec


def write_qtt(path_or_file, records: np.ndarray, *, channel_count: int = 4,
              resolution_ps: int = 1) -> None:
    header = _HEADER_STRUCT.pack(MAGIC, VERSION, channel_count,
                                 resolution_ps, b"\x00" * 20)
    if hasattr(path_or_file, "write"):
        path_or_file.write(header)
        path_or_file.write(records.astype(TIMETAG_DTYPE, copy=False).tobytes())
    else:
        with open(path_or_file, "wb") as fh:
            fh.write(header)
            records.astype(TIMETAG_DTYPE, copy=False).tofile(fh)


def read_header(fh) -> dict:
    raw = fh.read(HEADER_SIZE)
    if len(raw) != HEADER_SIZE:
        raise ValueError("truncated QTT1 header")
    magic, version, channel_count, resolution_ps, _ = _HEADER_STRUCT.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}; not a QTT1 file")
    if version != VERSION:
        raise ValueError(f"unsupported QTT1 version {version}")
    return {"version": version, "channel_count": channel_count,
            "resolution_ps": resolution_ps}


def read_qtt(path_or_file):
    """Read a whole QTT1 file; returns (header dict, records array)."""
    if hasattr(path_or_file, "read"):
        header = read_header(path_or_file)
        body = path_or_file.read()
        records = np.frombuffer(body, dtype=TIMETAG_DTYPE)
    else:
        with open(path_or_file, "rb") as fh:
            header = read_header(fh)
            records = np.fromfile(fh, dtype=TIMETAG_DTYPE)
    return header, records


def iter_qtt(path, chunk_records: int = 1 << 20):
    """Stream a QTT1 file in chunks of at most chunk_records records."""
    with open(path, "rb") as fh:
        read_header(fh)
        while True:
            chunk = np.fromfile(fh, dtype=TIMETAG_DTYPE, count=chunk_records)
            if len(chunk) == 0:
                return
            yield chunk


def write_framed(fh, records: np.ndarray, *, frame_records: int = 1 << 16) -> None:
    """Length-prefixed framed stream: [u32 byte count][records...] repeated."""
    for start in range(0, len(records), frame_records):
        chunk = records[start:start + frame_records]
        payload = chunk.astype(TIMETAG_DTYPE, copy=False).tobytes()
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)


def iter_framed(fh):
    """Iterate record chunks from a length-prefixed framed stream."""
    while True:
        size_raw = fh.read(4)
        if len(size_raw) == 0:
            return
        if len(size_raw) != 4:
            raise ValueError("truncated frame length prefix")
        (size,) = struct.unpack("<I", size_raw)
        if size % RECORD_SIZE != 0:
            raise ValueError(f"frame payload size {size} is not a whole "
                             f"number of {RECORD_SIZE}-byte records")
        payload = fh.read(size)
        if len(payload) != size:
            raise ValueError("truncated frame payload")
        yield np.frombuffer(payload, dtype=TIMETAG_DTYPE)


def read_framed(fh) -> np.ndarray:
    chunks = list(iter_framed(fh))
    if not chunks:
        return np.empty(0, dtype=TIMETAG_DTYPE)
    return np.concatenate(chunks)
