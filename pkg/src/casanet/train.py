"""Block-level training and inference for the fusion model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .augment import MixupParams, TrainingSample, mixup_channels, negative_sample_pad
from .features import POOL_FACTOR, plan_block_frames, pool_audio_to_video_rate
from .fusion import CasaModel
from .postproc import BlockPrediction, binarize, labels_to_timeline, median_filter, postprocess
from .tensor import Adam, make_rng
from .timeline import Timeline

log = logging.getLogger(__name__)

CASA_LR = 1e-4


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = CASA_LR
    batch_blocks: int = 2
    mixup: bool = True
    mixup_alpha: float = 0.5
    vvad_epochs: int = 10
    vvad_lr: float = 1e-4
    vvad_batch: int = 64
    block_frames: int = 200
    stride_frames: int = 100
    seed: int = 0


@dataclass
class TrainResult:
    history: list[float] = field(default_factory=list)  # mean loss per epoch, index 0 = before training


def session_sample(session, speaker_vectors: np.ndarray) -> TrainingSample:
    """Whole-session sample with audio pooled to the video rate."""
    return TrainingSample(
        visual=np.asarray(session.visual, dtype=np.float64),
        speakers=np.asarray(speaker_vectors, dtype=np.float64),
        labels=np.asarray(session.labels, dtype=np.float64),
        mask=np.ones(session.labels.shape[1]),
        audio=pool_audio_to_video_rate(session.audio, POOL_FACTOR),
    )


def cut_blocks(sample: TrainingSample, block: int, stride: int) -> list[TrainingSample]:
    out = []
    for off in plan_block_frames(sample.labels.shape[0], block, stride):
        sl = slice(off, off + block)
        out.append(
            TrainingSample(
                visual=sample.visual[sl],
                speakers=sample.speakers,
                labels=sample.labels[sl],
                mask=sample.mask,
                audio=sample.audio[sl],
            )
        )
    return out


def prepare_blocks(sessions, speaker_sets, n_max: int, cfg: TrainConfig, rng) -> list[TrainingSample]:
    """Pad every session to ``n_max`` speakers with out-of-session negatives, then cut blocks."""
    samples = [session_sample(s, v) for s, v in zip(sessions, speaker_sets)]
    blocks = []
    for i, smp in enumerate(samples):
        donors = [d for j, d in enumerate(samples) if j != i]
        padded = negative_sample_pad(smp, n_max, donors, rng) if smp.n < n_max else smp
        blocks.extend(cut_blocks(padded, cfg.block_frames, cfg.stride_frames))
    return blocks


def _stack(blocks: list[TrainingSample]):
    audio = np.stack([b.audio for b in blocks])
    visual = np.stack([b.visual for b in blocks])
    speakers = np.stack([b.speakers for b in blocks])
    labels = np.stack([b.labels for b in blocks])
    mask = np.stack([b.mask for b in blocks])
    return audio, visual, speakers, labels, mask


def epoch_loss(model: CasaModel, blocks: list[TrainingSample], batch: int) -> float:
    total = 0.0
    for start in range(0, len(blocks), batch):
        chunk = blocks[start : start + batch]
        audio, visual, speakers, labels, mask = _stack(chunk)
        ve = model.encode_visual(visual)
        total += model.loss_and_grad(audio, ve, speakers, labels, mask) * len(chunk)
    for p in model.trainable_params():
        p.zero_grad()
    return total / len(blocks)


def train_casa(
    model: CasaModel,
    blocks: list[TrainingSample],
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> TrainResult:
    """Adam on masked BCE over shuffled block batches; visual encoder stays frozen."""
    if not blocks:
        raise ValueError("train_casa: empty corpus")
    rng = rng if rng is not None else make_rng(cfg.seed)
    mix = MixupParams(cfg.mixup_alpha, cfg.mixup)
    params = model.trainable_params()
    opt = Adam(params, cfg.lr)
    result = TrainResult()
    if cfg.epochs <= 0:
        return result
    result.history.append(epoch_loss(model, blocks, cfg.batch_blocks))
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(blocks))
        total = 0.0
        for start in range(0, len(order), cfg.batch_blocks):
            chunk = [mixup_channels(blocks[i], rng, mix) for i in order[start : start + cfg.batch_blocks]]
            audio, visual, speakers, labels, mask = _stack(chunk)
            opt.zero_grad()
            loss = model.loss_and_grad(audio, model.encode_visual(visual), speakers, labels, mask)
            opt.step()
            total += loss * len(chunk)
        result.history.append(total / len(blocks))
        log.info("casa epoch %d loss %.4f", epoch + 1, result.history[-1])
    opt.zero_grad()
    return result


def predict_blocks(model: CasaModel, session, speaker_vectors, cfg: TrainConfig) -> list[BlockPrediction]:
    sample = session_sample(session, speaker_vectors)
    offsets = plan_block_frames(sample.labels.shape[0], cfg.block_frames, cfg.stride_frames)
    preds = []
    for off in offsets:
        sl = slice(off, off + cfg.block_frames)
        s = model.predict(sample.audio[sl][None], sample.visual[sl][None], sample.speakers[None])[0]
        preds.append(BlockPrediction(s, off / session.frame_rate, session.frame_rate))
    return preds


def infer_session(
    model: CasaModel,
    session,
    speaker_vectors,
    cfg: TrainConfig,
    window: int = 11,
    threshold: float = 0.5,
) -> Timeline:
    blocks = predict_blocks(model, session, speaker_vectors, cfg)
    labels = postprocess(blocks, session.length, window, threshold)
    return labels_to_timeline(labels, session.frame_rate, session.speakers, session.file_id)


def vvad_timeline(model: CasaModel, session, window: int = 11, threshold: float = 0.5) -> Timeline:
    """Initial diarization log from the frozen V-VAD alone."""
    probs = model.vvad_probs(session.visual)
    labels = binarize(median_filter(probs, window), threshold)
    return labels_to_timeline(labels, session.frame_rate, session.speakers, session.file_id)
