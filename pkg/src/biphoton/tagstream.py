"""Time-tag streams and the ``.bpl`` binary format.

Layout (little-endian)::

    offset  size  field
    0       4     magic b"BPL1"
    4       2     version (1)
    6       2     reserved (0)
    8       8     record count
    16      9*n   records: u8 channel, u64 timestamp [ps]

Resolution is fixed at 1 ps.  Duration and the channel-name map are not
part of the binary format; they travel in memory (and in the CLI's JSON
sidecar).
"""
from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Mapping

import numpy as np

MAGIC = b"BPL1"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp", "<u8")])
assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 9


class StreamFormatError(ValueError):
    pass


class BadMagicError(StreamFormatError):
    pass


class UnsupportedVersionError(StreamFormatError):
    pass


class TruncatedStreamError(StreamFormatError):
    pass


@dataclass(eq=False)
class TagStream:
    """Time-ordered detection records.

    ``timestamps`` are picoseconds (uint64).  ``duration_ps`` is the
    acquisition length used to normalize rates; when unknown it falls back
    to the span of the recorded tags.
    """

    channels: np.ndarray
    timestamps: np.ndarray
    duration_ps: int | None = None
    channel_map: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        self.timestamps = np.ascontiguousarray(self.timestamps, dtype=np.uint64)
        if self.channels.shape != self.timestamps.shape or self.channels.ndim != 1:
            raise ValueError("channels and timestamps must be 1-D and equal length")

    @classmethod
    def empty(cls, **kw) -> "TagStream":
        return cls(np.empty(0, np.uint8), np.empty(0, np.uint64), **kw)

    @classmethod
    def from_records(cls, records: np.ndarray, **kw) -> "TagStream":
        return cls(records["channel"], records["timestamp"], **kw)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (np.array_equal(self.channels, other.channels)
                and np.array_equal(self.timestamps, other.timestamps))

    def records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=RECORD_DTYPE)
        rec["channel"] = self.channels
        rec["timestamp"] = self.timestamps
        return rec

    @property
    def duration(self) -> int:
        """Duration in ps (explicit, or last - first + 1)."""
        if self.duration_ps is not None:
            return int(self.duration_ps)
        if len(self) == 0:
            return 0
        return int(self.timestamps.max() - self.timestamps.min()) + 1

    def channel_ids(self) -> list[int]:
        return [int(c) for c in np.unique(self.channels)]

    def channel(self, ch: int) -> np.ndarray:
        """Sorted int64 timestamps of one channel."""
        t = self.timestamps[self.channels == ch].astype(np.int64)
        if t.size > 1 and np.any(t[1:] < t[:-1]):
            t = np.sort(t, kind="stable")
        return t

    def is_valid(self) -> bool:
        for ch in self.channel_ids():
            t = self.timestamps[self.channels == ch]
            if np.any(t[1:] < t[:-1]):
                return False
        return True

    def select(self, *chs: int) -> "TagStream":
        keep = np.isin(self.channels, chs)
        return TagStream(self.channels[keep], self.timestamps[keep], self.duration_ps, dict(self.channel_map))


def _open_sink(sink):
    if isinstance(sink, (str, os.PathLike)):
        return open(sink, "wb"), True
    return sink, False


def write_stream(stream: TagStream, sink: str | os.PathLike | BinaryIO) -> int:
    """Write ``stream`` in .bpl format; returns the number of bytes written."""
    fh, owned = _open_sink(sink)
    try:
        header = HEADER.pack(MAGIC, VERSION, 0, len(stream))
        body = stream.records().tobytes()
        fh.write(header)
        fh.write(body)
    finally:
        if owned:
            fh.close()
    return len(header) + len(body)


def to_bytes(stream: TagStream) -> bytes:
    buf = io.BytesIO()
    write_stream(stream, buf)
    return buf.getvalue()


def parse_bytes(data: bytes | memoryview, **kw) -> TagStream:
    if len(data) < HEADER.size:
        raise TruncatedStreamError(f"header needs {HEADER.size} bytes, got {len(data)}")
    magic, version, reserved, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if reserved != 0:
        raise StreamFormatError(f"reserved header field is {reserved}, expected 0")
    need = HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) < need:
        raise TruncatedStreamError(f"expected {count} records ({need} bytes), got {len(data)} bytes")
    if len(data) > need:
        raise StreamFormatError(f"{len(data) - need} trailing bytes after {count} records")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    return TagStream.from_records(rec, **kw)


def read_stream(source: str | os.PathLike | BinaryIO | bytes, **kw) -> TagStream:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return parse_bytes(source, **kw)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return parse_bytes(fh.read(), **kw)
    return parse_bytes(source.read(), **kw)


def merge_sorted(*streams: TagStream) -> TagStream:
    """Globally time-sorted union; ties break on (channel, input index, input order)."""
    if not streams:
        return TagStream.empty()
    if len(streams) == 1:
        s = streams[0]
        order = np.lexsort((s.channels, s.timestamps))
        return TagStream(s.channels[order], s.timestamps[order], s.duration_ps, dict(s.channel_map))
    ch = np.concatenate([s.channels for s in streams])
    ts = np.concatenate([s.timestamps for s in streams])
    src = np.concatenate([np.full(len(s), i, dtype=np.int32) for i, s in enumerate(streams)])
    order = np.lexsort((src, ch, ts))
    durations = [s.duration_ps for s in streams if s.duration_ps is not None]
    cmap = {}
    for s in streams:
        cmap.update(s.channel_map)
    return TagStream(ch[order], ts[order], max(durations) if durations else None, cmap)


def read_csv(source: str | os.PathLike | io.TextIOBase, **kw) -> TagStream:
    """Import ``channel,timestamp_ps`` rows (header optional)."""
    fh = open(source, newline="") if isinstance(source, (str, os.PathLike)) else source
    try:
        chans, times = [], []
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip() == "channel":
                continue
            if len(row) != 2:
                raise StreamFormatError(f"expected 2 columns, got {len(row)}: {row!r}")
            try:
                c, t = int(row[0]), int(row[1])
            except ValueError as exc:
                raise StreamFormatError(f"bad CSV row {row!r}") from exc
            if not (0 <= c < 256 and t >= 0):
                raise StreamFormatError(f"out-of-range CSV row {row!r}")
            chans.append(c)
            times.append(t)
    finally:
        if fh is not source:
            fh.close()
    s = TagStream(np.array(chans, dtype=np.uint8), np.array(times, dtype=np.uint64), **kw)
    return merge_sorted(s)


def write_csv(stream: TagStream, sink) -> None:
    fh = open(sink, "w", newline="") if isinstance(sink, (str, os.PathLike)) else sink
    try:
        fh.write("channel,timestamp_ps\n")
        for c, t in zip(stream.channels.tolist(), stream.timestamps.tolist()):
            fh.write(f"{c},{t}\n")
    finally:
        if fh is not sink:
            fh.close()
