"""Pseudo-label refinement: embeddings from the current log, retrain, re-infer, replace the log."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .encoders import SpeakerEmbeddingSet
from .fusion import CasaModel
from .io import save_rttm
from .postproc import timeline_to_labels
from .scoring import DerReport, score_corpus
from .tensor import make_rng
from .timeline import Timeline
from .train import TrainConfig, infer_session, prepare_blocks, train_casa

log = logging.getLogger(__name__)


@dataclass
class RefineConfig:
    rounds: int = 2
    epochs: int = 8
    median_window: int = 11
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")


@dataclass
class DiarizationLog:
    round: int
    timelines: dict[str, Timeline]


def extract_speaker_embeddings(session, log_tl: Timeline) -> SpeakerEmbeddingSet:
    """Mean identity vector over frames where the log has exactly this speaker active.

    Speakers without such frames get the session's global mean identity
    vector and are flagged in ``fallback``.
    """
    labels = timeline_to_labels(log_tl, session.frames, session.frame_rate, session.speakers)
    single = labels.sum(axis=1) == 1
    identity = np.asarray(session.identity, dtype=np.float64)
    global_mean = identity.mean(axis=0)
    vectors, fallback = [], []
    for n in range(labels.shape[1]):
        sel = single & (labels[:, n] == 1)
        if sel.any():
            vectors.append(identity[sel].mean(axis=0))
            fallback.append(False)
        else:
            vectors.append(global_mean)
            fallback.append(True)
    return SpeakerEmbeddingSet(np.stack(vectors, axis=1), "log", fallback)


def score_logs(sessions, logs: Mapping[str, Timeline]) -> DerReport:
    refs = {s.file_id: s.reference() for s in sessions}
    _, total = score_corpus(refs, {s.file_id: logs[s.file_id] for s in sessions})
    return total


def refine_loop(
    model: CasaModel,
    train_sessions: Sequence,
    dev_sessions: Sequence,
    round0: Mapping[str, Timeline],
    cfg: RefineConfig,
    train_cfg: TrainConfig,
    out_dir: str | Path | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[CasaModel, list[dict]]:
    """Run ``cfg.rounds`` rounds of embedding extraction, retraining and re-inference.

    Each round warm-starts from the previous weights and trains on
    ground-truth labels. Returns the model and a per-round history of dev
    DER components; round 0 scores the initial log itself. With an
    ``out_dir``, logs are written as ``round_<k>.rttm`` together with
    ``dev_ref.rttm`` and ``refine_history.json``.
    """
    rng = rng if rng is not None else make_rng(train_cfg.seed)
    sessions = list(train_sessions) + list(dev_sessions)
    logs = {s.file_id: round0[s.file_id] for s in sessions}
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_rttm(out / "dev_ref.rttm", [s.reference() for s in dev_sessions])
        save_rttm(out / "round_0.rttm", logs.values())

    history = [_history_entry(0, dev_sessions, logs, None)]
    round_cfg = replace(train_cfg, epochs=cfg.epochs)
    for k in range(1, cfg.rounds + 1):
        spk = {s.file_id: extract_speaker_embeddings(s, logs[s.file_id]).vectors for s in sessions}
        blocks = prepare_blocks(
            train_sessions, [spk[s.file_id] for s in train_sessions], model.config.n_max, round_cfg, rng
        )
        result = train_casa(model, blocks, round_cfg, rng)
        logs = {
            s.file_id: infer_session(model, s, spk[s.file_id], round_cfg, cfg.median_window, cfg.threshold)
            for s in sessions
        }
        history.append(_history_entry(k, dev_sessions, logs, result.history))
        log.info("refine round %d dev DER %.4f", k, history[-1]["DER"])
        if out is not None:
            save_rttm(out / f"round_{k}.rttm", logs.values())
    if out is not None:
        write_history(out / "refine_history.json", history)
    return model, history


def _history_entry(k: int, dev_sessions, logs, losses) -> dict:
    entry = {"round": k}
    if dev_sessions:
        entry.update(score_logs(dev_sessions, logs).as_dict())
    if losses is not None:
        entry["loss"] = list(losses)
    return entry


def write_history(path, history: list[dict]) -> None:
    Path(path).write_text(json.dumps({"rounds": history}, indent=2, sort_keys=True) + "\n")


def read_history(path) -> list[dict]:
    return json.loads(Path(path).read_text())["rounds"]
