"""Two-stage training (V-VAD, then fusion) and corpus-level inference."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .encoders import train_vvad
from .features import POOL_FACTOR, pool_audio_to_video_rate
from .fusion import CasaConfig, CasaModel
from .refine import extract_speaker_embeddings
from .tensor import make_rng
from .timeline import Timeline
from .train import TrainConfig, infer_session, prepare_blocks, train_casa, vvad_timeline

log = logging.getLogger(__name__)


@dataclass
class SystemHistory:
    vvad: list[float] = field(default_factory=list)
    casa: list[float] = field(default_factory=list)


def fit_vvad(model: CasaModel, train_sessions, cfg: TrainConfig) -> list[float]:
    pooled = np.concatenate([pool_audio_to_video_rate(s.audio, POOL_FACTOR) for s in train_sessions])
    model.audio.fit_standardizer(pooled)
    return train_vvad(
        train_sessions,
        model.visual,
        model.vvad_head,
        epochs=cfg.vvad_epochs,
        lr=cfg.vvad_lr,
        batch_size=cfg.vvad_batch,
        seed=cfg.seed,
    )


def vvad_embeddings(model: CasaModel, session, window: int = 11, threshold: float = 0.5):
    """Speaker embeddings taken from the V-VAD log of ``session``."""
    return extract_speaker_embeddings(session, vvad_timeline(model, session, window, threshold)).vectors


def train_system(
    train_sessions,
    model_cfg: CasaConfig | None = None,
    cfg: TrainConfig | None = None,
    window: int = 11,
    threshold: float = 0.5,
) -> tuple[CasaModel, SystemHistory]:
    """Train and freeze the V-VAD, then train the fusion path on V-VAD-log embeddings."""
    if not train_sessions:
        raise ValueError("train_system: empty corpus")
    cfg = cfg or TrainConfig()
    model = CasaModel(model_cfg or CasaConfig(), seed=cfg.seed)
    hist = SystemHistory()
    hist.vvad = fit_vvad(model, train_sessions, cfg)
    spk = [vvad_embeddings(model, s, window, threshold) for s in train_sessions]
    rng = make_rng(cfg.seed + 1)
    blocks = prepare_blocks(train_sessions, spk, model.config.n_max, cfg, rng)
    hist.casa = train_casa(model, blocks, cfg, rng).history
    return model, hist


def infer_corpus(
    model: CasaModel,
    sessions,
    cfg: TrainConfig | None = None,
    window: int = 11,
    threshold: float = 0.5,
) -> dict[str, Timeline]:
    cfg = cfg or TrainConfig()
    out = {}
    for s in sessions:
        spk = vvad_embeddings(model, s, window, threshold)
        out[s.file_id] = infer_session(model, s, spk, cfg, window, threshold)
    return out
