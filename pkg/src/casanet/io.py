"""RTTM text I/O and the FAEB frame-aligned embedding binary format.

FAEB layout (all little-endian)::

    offset  size  field
    0       4     magic b"FAEB"
    4       4     version (u32, currently 1)
    8       4     T (u32)  frames
    12      4     D (u32)  feature dimension
    16      4     N (u32)  speakers / channels
    20      4     frame_rate (f32, Hz)
    24      4*T*N*D  payload, f32, [t][n][d] order

In memory a block is held as ``data[t, d, n]`` (T x D x N).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .timeline import Segment, Timeline

FAEB_MAGIC = b"FAEB"
FAEB_VERSION = 1
_FAEB_HEADER = struct.Struct("<4sIIIIf")


class RttmError(ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"RTTM line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class FaebError(ValueError):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"FAEB byte {offset}: {reason}")
        self.offset = offset


class FaebMagicError(FaebError):
    pass


class FaebVersionError(FaebError):
    pass


class FaebTruncatedError(FaebError):
    pass


class FaebSizeError(FaebError):
    pass


@dataclass
class EmbeddingBlock:
    data: np.ndarray  # T x D x N
    offset: float = 0.0
    kind: str = ""
    frame_rate: float = 25.0

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


# --------------------------------------------------------------------- RTTM


def parse_rttm(text: str) -> dict[str, Timeline]:
    out: dict[str, Timeline] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        fields = line.split()
        if len(fields) != 10:
            raise RttmError(line_no, f"expected 10 fields, found {len(fields)}")
        kind, file_id, channel, tbeg, tdur, _, _, name, _, _ = fields
        if kind != "SPEAKER":
            raise RttmError(line_no, f"unsupported record type {kind!r}")
        try:
            int(channel)
        except ValueError:
            raise RttmError(line_no, f"channel {channel!r} is not an integer") from None
        try:
            start = float(tbeg)
            dur = float(tdur)
        except ValueError:
            raise RttmError(line_no, f"non-numeric time field in {tbeg!r} {tdur!r}") from None
        if not (math.isfinite(start) and math.isfinite(dur)):
            raise RttmError(line_no, "non-finite time field")
        if start < 0:
            raise RttmError(line_no, f"negative onset {start}")
        if dur < 0:
            raise RttmError(line_no, f"negative duration {dur}")
        if dur == 0:
            raise RttmError(line_no, "zero duration")
        out.setdefault(file_id, Timeline(file_id)).segments.append(Segment(name, start, dur))
    return out


def write_rttm(timelines: Iterable[Timeline] | Mapping[str, Timeline]) -> str:
    if isinstance(timelines, Mapping):
        timelines = timelines.values()
    rows = []
    for tl in timelines:
        for s in tl.segments:
            rows.append((tl.file_id, round(s.start, 2), s.speaker, s.duration))
    rows.sort()
    lines = [
        f"SPEAKER {fid} 1 {start:.2f} {dur:.2f} <NA> <NA> {spk} <NA> <NA>"
        for fid, start, spk, dur in rows
    ]
    return "".join(line + "\n" for line in lines)


def read_rttm(path) -> dict[str, Timeline]:
    return parse_rttm(Path(path).read_text(encoding="utf-8"))


def save_rttm(path, timelines) -> None:
    Path(path).write_text(write_rttm(timelines), encoding="utf-8")


# --------------------------------------------------------------------- FAEB


def encode_faeb(block: EmbeddingBlock | np.ndarray, frame_rate: float | None = None) -> bytes:
    if isinstance(block, EmbeddingBlock):
        data, rate = block.data, block.frame_rate
    else:
        data, rate = block, 25.0
    if frame_rate is not None:
        rate = frame_rate
    data = np.asarray(data)
    if data.ndim != 3:
        raise ValueError(f"FAEB payload must be T x D x N, got shape {data.shape}")
    t, d, n = data.shape
    header = _FAEB_HEADER.pack(FAEB_MAGIC, FAEB_VERSION, t, d, n, rate)
    payload = np.ascontiguousarray(data.transpose(0, 2, 1), dtype="<f4").tobytes()
    return header + payload


def decode_faeb(buf: bytes) -> EmbeddingBlock:
    if len(buf) < 4 or buf[:4] != FAEB_MAGIC:
        raise FaebMagicError(0, f"bad magic {bytes(buf[:4])!r}, expected {FAEB_MAGIC!r}")
    if len(buf) < _FAEB_HEADER.size:
        raise FaebTruncatedError(len(buf), f"header needs {_FAEB_HEADER.size} bytes")
    _, version, t, d, n, rate = _FAEB_HEADER.unpack_from(buf)
    if version != FAEB_VERSION:
        raise FaebVersionError(4, f"unsupported version {version}")
    need = 4 * t * d * n
    have = len(buf) - _FAEB_HEADER.size
    if have < need:
        raise FaebTruncatedError(
            len(buf), f"payload truncated: header declares {need} bytes, found {have}"
        )
    if have > need:
        raise FaebSizeError(
            _FAEB_HEADER.size + need, f"{have - need} trailing bytes beyond declared payload"
        )
    flat = np.frombuffer(buf, dtype="<f4", count=t * n * d, offset=_FAEB_HEADER.size)
    data = flat.reshape(t, n, d).transpose(0, 2, 1).astype(np.float64)
    return EmbeddingBlock(np.ascontiguousarray(data), frame_rate=float(rate))


def write_faeb(path, block: EmbeddingBlock | np.ndarray, frame_rate: float | None = None) -> None:
    Path(path).write_bytes(encode_faeb(block, frame_rate))


def read_faeb(path) -> EmbeddingBlock:
    return decode_faeb(Path(path).read_bytes())
