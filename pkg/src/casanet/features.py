"""Log mel filterbank features, block planning and audio-to-video rate pooling."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FRAME_LENGTH = 0.025
FRAME_SHIFT = 0.010
N_FFT = 512
N_MELS = 40
LOG_FLOOR = 1e-10

BLOCK_SECONDS = 8.0
STRIDE_SECONDS = 4.0
VIDEO_RATE = 25
AUDIO_RATE = 100
POOL_FACTOR = AUDIO_RATE // VIDEO_RATE


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.size == 0:
            raise ValueError("waveform is empty")


@dataclass
class FbankMatrix:
    frames: np.ndarray
    frame_shift: float = FRAME_SHIFT
    frame_length: float = FRAME_LENGTH


@dataclass
class BlockPlan:
    session_length: float
    block_length: float
    stride: float
    offsets: list[float]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = N_MELS, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE
) -> np.ndarray:
    """Triangular HTK-mel filters spanning 0 Hz to Nyquist, shape (n_mels, n_fft//2+1)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def fbank(w: Waveform) -> FbankMatrix:
    """40-bin log mel energies, 25 ms Hamming frames every 10 ms.

    The signal is symmetrically padded so that ``len // 160`` frames come
    out (800 for an 8 s block); frame ``t`` is centred on sample
    ``160 t + 80``.
    """
    if w.sample_rate != SAMPLE_RATE:
        raise ValueError(f"fbank: only {SAMPLE_RATE} Hz audio is supported, got {w.sample_rate}")
    win = int(round(FRAME_LENGTH * SAMPLE_RATE))
    hop = int(round(FRAME_SHIFT * SAMPLE_RATE))
    x = w.samples
    if x.size < win:
        raise ValueError(f"fbank: waveform of {x.size} samples is shorter than one {win}-sample frame")
    n_frames = x.size // hop
    need = (n_frames - 1) * hop + win - x.size
    left = (win - hop) // 2
    x = np.pad(x, (left, max(0, need - left)), mode="symmetric")
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hamming(win)[None, :]
    power = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1)) ** 2
    energies = power @ mel_filterbank().T
    return FbankMatrix(np.log(np.maximum(energies, LOG_FLOOR)))


def read_wav(path) -> Waveform:
    """Read mono 16-bit PCM WAV into [-1, 1) floats."""
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())


def plan_block_frames(n_frames: int, block: int, stride: int) -> list[int]:
    """Block start frames; the last block is end-anchored if it would overrun."""
    if n_frames < block:
        raise ValueError(
            f"session of {n_frames} frames is shorter than one {block}-frame block; zero-pad it upstream"
        )
    offsets = list(range(0, n_frames - block + 1, stride))
    if offsets[-1] + block < n_frames:
        offsets.append(n_frames - block)
    return offsets


def plan_blocks(
    session_length: float,
    block_length: float = BLOCK_SECONDS,
    stride: float = STRIDE_SECONDS,
    resolution: float = 1.0 / VIDEO_RATE,
) -> BlockPlan:
    """Block offsets in seconds, computed on a frame grid of ``resolution`` seconds."""
    n = int(round(session_length / resolution))
    b = int(round(block_length / resolution))
    s = int(round(stride / resolution))
    offsets = [round(o * resolution, 9) for o in plan_block_frames(n, b, s)]
    return BlockPlan(session_length, block_length, stride, offsets)


def pool_audio_to_video_rate(x: np.ndarray, factor: int = POOL_FACTOR) -> np.ndarray:
    """Mean over non-overlapping groups of ``factor`` consecutive frames."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] % factor:
        raise ValueError(f"cannot pool {x.shape[0]} frames in groups of {factor}")
    return x.reshape(x.shape[0] // factor, factor, *x.shape[1:]).mean(axis=1)
