"""Block merging, smoothing, thresholding and frame/segment conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .features import VIDEO_RATE
from .timeline import Segment, Timeline

DEFAULT_MEDIAN_WINDOW = 11
DEFAULT_THRESHOLD = 0.5


@dataclass
class BlockPrediction:
    S: np.ndarray  # T x N speech probabilities
    offset: float  # seconds
    frame_rate: float = VIDEO_RATE


@dataclass
class SessionPrediction:
    merged: np.ndarray  # T_session x N
    frame_rate: float = VIDEO_RATE


def overlap_average(
    blocks: Sequence[BlockPrediction], session_length: float | None = None
) -> SessionPrediction:
    """Per-frame mean of every block prediction that covers the frame."""
    if not blocks:
        raise ValueError("overlap_average: no blocks")
    rate = blocks[0].frame_rate
    n_spk = blocks[0].S.shape[1]
    starts = [int(round(b.offset * rate)) for b in blocks]
    if session_length is None:
        total = max(s + b.S.shape[0] for s, b in zip(starts, blocks))
    else:
        total = int(math.ceil(session_length * rate - 1e-9))
    mean = np.zeros((total, n_spk))
    cover = np.zeros(total, dtype=np.int64)
    for s, b in zip(starts, blocks):
        if b.S.shape[1] != n_spk or b.frame_rate != rate:
            raise ValueError("overlap_average: blocks disagree on speaker count or frame rate")
        end = min(total, s + b.S.shape[0])
        cover[s:end] += 1
        # running mean, so identical contributions reproduce their value exactly
        mean[s:end] += (b.S[: end - s] - mean[s:end]) / cover[s:end, None]
    if np.any(cover == 0):
        first = int(np.flatnonzero(cover == 0)[0])
        raise ValueError(f"overlap_average: frame {first} is not covered by any block")
    return SessionPrediction(mean, rate)


def median_filter(seq, window: int = DEFAULT_MEDIAN_WINDOW) -> np.ndarray:
    """Sliding median with edge replication; works column-wise on 2-D input."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"median window must be odd and >= 1, got {window}")
    x = np.asarray(seq, dtype=np.float64)
    if window == 1 or x.shape[0] == 0:
        return x.copy()
    if x.ndim == 1:
        return kernels.median_filter(x, window)
    out = np.empty_like(x)
    for n in range(x.shape[1]):
        out[:, n] = kernels.median_filter(np.ascontiguousarray(x[:, n]), window)
    return out


def binarize(s, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    probs = s.merged if isinstance(s, SessionPrediction) else np.asarray(s)
    return (probs >= threshold).astype(np.int8)


def labels_to_timeline(
    labels,
    frame_rate: float = VIDEO_RATE,
    speakers: Sequence[str] | None = None,
    file_id: str = "",
) -> Timeline:
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[:, None]
    if speakers is None:
        speakers = [f"spk{n}" for n in range(labels.shape[1])]
    segs = []
    for n, name in enumerate(speakers):
        for start, length in kernels.label_runs(labels[:, n]):
            segs.append(Segment(name, start / frame_rate, length / frame_rate))
    segs.sort(key=lambda s: (s.start, s.speaker))
    return Timeline(file_id, segs)


def timeline_to_labels(
    timeline: Timeline,
    n_frames: int,
    frame_rate: float = VIDEO_RATE,
    speakers: Sequence[str] | None = None,
) -> np.ndarray:
    """Rasterise by frame centres: frame t is active if a segment covers (t + 0.5) / rate."""
    if speakers is None:
        speakers = timeline.speakers
    col = {name: n for n, name in enumerate(speakers)}
    labels = np.zeros((n_frames, len(speakers)), dtype=np.int8)
    for s in timeline.segments:
        if s.speaker not in col:
            continue
        # first frame with centre >= start, last frame with centre < end
        lo = max(0, int(math.ceil(s.start * frame_rate - 0.5 - 1e-9)))
        hi = min(n_frames, int(math.ceil(s.end * frame_rate - 0.5 - 1e-9)))
        if hi > lo:
            labels[lo:hi, col[s.speaker]] = 1
    return labels


def postprocess(
    blocks: Sequence[BlockPrediction],
    session_length: float | None = None,
    window: int = DEFAULT_MEDIAN_WINDOW,
    threshold: float = DEFAULT_THRESHOLD,
) -> np.ndarray:
    """overlap average -> median filter -> binarize; returns frame labels."""
    merged = overlap_average(blocks, session_length)
    smoothed = median_filter(merged.merged, window)
    return binarize(smoothed, threshold)
