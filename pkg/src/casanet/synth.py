"""Seeded synthetic conversations standing in for recorded meetings.

Each speaker's activity is an independent two-state Markov chain at the
video frame rate. Observations are prototype-plus-Gaussian-noise streams:

* lip features: a shared "speaking" or "idle" prototype per frame;
* log-mel-like audio at 4x the video rate: background level plus, for
  every active speaker, a speech-energy vector and a speaker-specific
  spectral tilt ``P @ centroid``;
* identity stream: mean centroid of the active speakers plus noise.

Prototypes and ``P`` come from ``world_seed`` and are shared by every
corpus built with the same world seed. Sessions depend only on
``(seed, session index)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import AUDIO_RATE, BLOCK_SECONDS, VIDEO_RATE
from .postproc import labels_to_timeline, timeline_to_labels
from .timeline import Timeline


@dataclass
class SynthConfig:
    sessions: int = 10
    length: float = 60.0
    speakers: int = 3
    frame_rate: int = VIDEO_RATE
    p_ss: float = 0.95
    p_qq: float = 0.97
    visual_snr_db: float = 5.0
    audio_snr_db: float = 0.0
    identity_noise: float = 0.3
    f_lip: int = 32
    d_i: int = 32
    n_mels: int = 40
    seed: int = 0
    world_seed: int = 20250601

    def __post_init__(self) -> None:
        for name in ("p_ss", "p_qq"):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {p}")
        if self.length < BLOCK_SECONDS:
            raise ValueError(f"session length {self.length} s is shorter than one {BLOCK_SECONDS} s block")
        if self.sessions < 1 or self.speakers < 1:
            raise ValueError("need at least one session and one speaker")
        if self.frame_rate != VIDEO_RATE:
            raise ValueError(f"only {VIDEO_RATE} Hz video is supported")

    @property
    def frames(self) -> int:
        return int(round(self.length * self.frame_rate))

    @property
    def stationary_speaking(self) -> float:
        return (1.0 - self.p_qq) / ((1.0 - self.p_ss) + (1.0 - self.p_qq))


@dataclass
class World:
    speak: np.ndarray  # F_lip
    idle: np.ndarray  # F_lip
    background: np.ndarray  # n_mels
    speech: np.ndarray  # n_mels
    tilt: np.ndarray  # n_mels x D_I


def make_world(cfg: SynthConfig) -> World:
    rng = np.random.Generator(np.random.PCG64(cfg.world_seed))
    speak = rng.normal(size=cfg.f_lip)
    idle = rng.normal(size=cfg.f_lip)
    gap = speak - idle
    # lip prototypes 4 units apart
    idle = speak - 4.0 * gap / np.linalg.norm(gap)
    background = rng.normal(size=cfg.n_mels) - 5.0
    speech = np.abs(rng.normal(size=cfg.n_mels))
    speech *= 4.0 / np.linalg.norm(speech)
    tilt = rng.normal(size=(cfg.n_mels, cfg.d_i))
    tilt *= 2.0 / np.sqrt(cfg.n_mels)
    return World(speak, idle, background, speech, tilt)


@dataclass
class SynthSession:
    file_id: str
    labels: np.ndarray  # T x N, {0,1}
    visual: np.ndarray  # T x F_lip x N
    audio: np.ndarray  # 4T x n_mels
    identity: np.ndarray  # T x D_I
    centroids: np.ndarray  # D_I x N, unit columns
    speakers: list[str] = field(default_factory=list)
    frame_rate: int = VIDEO_RATE

    @property
    def frames(self) -> int:
        return self.labels.shape[0]

    @property
    def length(self) -> float:
        return self.frames / self.frame_rate

    @property
    def n_speakers(self) -> int:
        return self.labels.shape[1]

    def reference(self) -> Timeline:
        return labels_to_timeline(self.labels, self.frame_rate, self.speakers, self.file_id)


def markov_chain(rng, n: int, p_ss: float, p_qq: float, start: int | None = None) -> np.ndarray:
    """Binary chain; state 1 stays with prob ``p_ss``, state 0 with ``p_qq``."""
    pi = (1.0 - p_qq) / ((1.0 - p_ss) + (1.0 - p_qq))
    u = rng.random(n)
    out = np.empty(n, dtype=np.int8)
    state = int(u[0] < pi) if start is None else start
    out[0] = state
    for t in range(1, n):
        stay = p_ss if state else p_qq
        if u[t] >= stay:
            state = 1 - state
        out[t] = state
    return out


def session_rng(cfg: SynthConfig, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, index])))


def generate_session(cfg: SynthConfig, index: int, world: World | None = None) -> SynthSession:
    world = world or make_world(cfg)
    rng = session_rng(cfg, index)
    t_len, n = cfg.frames, cfg.speakers
    labels = np.stack([markov_chain(rng, t_len, cfg.p_ss, cfg.p_qq) for _ in range(n)], axis=1)

    q, _ = np.linalg.qr(rng.normal(size=(cfg.d_i, n)))
    centroids = q[:, :n]

    gap = np.linalg.norm(world.speak - world.idle)
    sigma_v = gap / (2.0 * 10.0 ** (cfg.visual_snr_db / 20.0))
    proto = np.where(labels[:, None, :] == 1, world.speak[None, :, None], world.idle[None, :, None])
    visual = proto + sigma_v * rng.normal(size=(t_len, cfg.f_lip, n))

    sigma_a = np.linalg.norm(world.speech) / (2.0 * 10.0 ** (cfg.audio_snr_db / 20.0))
    per_spk = world.speech[:, None] + world.tilt @ centroids  # n_mels x N
    clean = world.background[None, :] + labels @ per_spk.T  # T x n_mels
    factor = AUDIO_RATE // cfg.frame_rate
    audio = np.repeat(clean, factor, axis=0) + sigma_a * rng.normal(size=(t_len * factor, cfg.n_mels))

    active = labels.sum(axis=1, keepdims=True)
    mix = (labels @ centroids.T) / np.maximum(active, 1)
    identity = mix + cfg.identity_noise * rng.normal(size=(t_len, cfg.d_i)) / np.sqrt(cfg.d_i)

    file_id = f"sess{index:03d}"
    speakers = [f"{file_id}_spk{k}" for k in range(n)]
    return SynthSession(file_id, labels, visual, audio, identity, centroids, speakers, cfg.frame_rate)


def generate(cfg: SynthConfig) -> list[SynthSession]:
    world = make_world(cfg)
    return [generate_session(cfg, i, world) for i in range(cfg.sessions)]


def train_dev_split(corpus, ratio: float = 0.8):
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"split ratio must lie in [0, 1], got {ratio}")
    k = int(round(ratio * len(corpus)))
    return list(corpus[:k]), list(corpus[k:])


def corrupt_log(
    timeline: Timeline,
    flip_fraction: float,
    rng: np.random.Generator,
    n_frames: int,
    speakers=None,
    frame_rate: int = VIDEO_RATE,
) -> Timeline:
    """Flip exactly ``round(fraction * cells)`` random (frame, speaker) cells."""
    if not 0.0 <= flip_fraction <= 1.0:
        raise ValueError(f"flip fraction must lie in [0, 1], got {flip_fraction}")
    speakers = list(speakers) if speakers is not None else timeline.speakers
    labels = timeline_to_labels(timeline, n_frames, frame_rate, speakers)
    flat = labels.reshape(-1)
    k = int(round(flip_fraction * flat.size))
    idx = rng.choice(flat.size, size=k, replace=False)
    flat[idx] = 1 - flat[idx]
    return labels_to_timeline(labels, frame_rate, speakers, timeline.file_id)
