"""Mixup over speaker channels and negative-sampling speaker padding."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class MixupParams:
    alpha: float = 0.5
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"mixup alpha must be positive, got {self.alpha}")


@dataclass
class TrainingSample:
    visual: np.ndarray  # T x F_lip x N
    speakers: np.ndarray  # D_I x N
    labels: np.ndarray  # T x N
    mask: np.ndarray  # N
    audio: np.ndarray | None = None  # shared by every channel of the sample

    @property
    def n(self) -> int:
        return self.labels.shape[1]

    def channels(self, order) -> "TrainingSample":
        order = np.asarray(order)
        return replace(
            self,
            visual=self.visual[:, :, order],
            speakers=self.speakers[:, order],
            labels=self.labels[:, order],
            mask=self.mask[order],
        )


def _unit_columns(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=0)
    return v / np.where(norms > 0, norms, 1.0)


def mixup(s_i: TrainingSample, s_j: TrainingSample, lam: float) -> TrainingSample:
    """Convex combination ``lam * s_i + (1 - lam) * s_j`` of every field.

    Speaker embeddings are re-normalised to unit length afterwards.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixup weight must lie in [0, 1], got {lam}")
    for name in ("visual", "speakers", "labels", "mask"):
        a, b = getattr(s_i, name), getattr(s_j, name)
        if a.shape != b.shape:
            raise ValueError(f"mixup: {name} shapes differ: {a.shape} vs {b.shape}")

    def mix(a, b):
        return lam * a + (1.0 - lam) * b

    audio = None
    if s_i.audio is not None and s_j.audio is not None:
        audio = s_i.audio if s_i.audio is s_j.audio else mix(s_i.audio, s_j.audio)
    return TrainingSample(
        visual=mix(s_i.visual, s_j.visual),
        speakers=_unit_columns(mix(s_i.speakers, s_j.speakers)),
        labels=mix(s_i.labels, s_j.labels),
        mask=np.minimum(s_i.mask, s_j.mask),
        audio=audio,
    )


def sample_lambda(rng: np.random.Generator, alpha: float = 0.5) -> float:
    return float(rng.beta(alpha, alpha))


def mixup_channels(sample: TrainingSample, rng: np.random.Generator, params: MixupParams) -> TrainingSample:
    """Mix each speaker channel with a randomly permuted partner from the same sample."""
    if not params.enabled:
        return sample
    lam = sample_lambda(rng, params.alpha)
    partner = sample.channels(rng.permutation(sample.n))
    return mixup(sample, partner, lam)


def negative_sample_pad(
    sample: TrainingSample,
    n_max: int,
    donors: list[TrainingSample],
    rng: np.random.Generator,
) -> TrainingSample:
    """Pad to ``n_max`` channels with silent, out-of-session speakers.

    Each padded channel gets lip frames drawn from donors' non-speaking
    frames, a donor speaker embedding and an all-zero label row. Padded
    channels are valid for the loss (they are true negatives).
    """
    n = sample.n
    if n > n_max:
        raise ValueError(f"sample has {n} speakers, more than n_max={n_max}")
    if n == n_max:
        return sample
    if not donors:
        raise ValueError("negative_sample_pad: padding needed but the donor pool is empty")
    t = sample.labels.shape[0]
    idle_frames = np.concatenate(
        [d.visual.transpose(0, 2, 1)[d.labels == 0] for d in donors], axis=0
    )
    donor_spk = np.concatenate([d.speakers for d in donors], axis=1)
    if idle_frames.shape[0] == 0:
        raise ValueError("negative_sample_pad: donors contain no non-speaking frames")
    k = n_max - n
    pad_visual = idle_frames[rng.integers(0, idle_frames.shape[0], size=(t, k))].transpose(0, 2, 1)
    pad_spk = donor_spk[:, rng.choice(donor_spk.shape[1], size=k, replace=donor_spk.shape[1] < k)]
    return TrainingSample(
        visual=np.concatenate([sample.visual, pad_visual], axis=2),
        speakers=np.concatenate([sample.speakers, pad_spk], axis=1),
        labels=np.concatenate([sample.labels, np.zeros((t, k))], axis=1),
        mask=np.concatenate([sample.mask, np.ones(k)]),
        audio=sample.audio,
    )
