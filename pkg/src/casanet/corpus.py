"""On-disk corpus layout.

::

    DIR/config.json         resolved run configuration
    DIR/corpus.json         manifest: sessions with split, speakers, frame count
    DIR/ref.rttm            references for every session
    DIR/train.rttm          references, train split only
    DIR/dev.rttm            references, dev split only
    DIR/<file_id>/visual.faeb     T x F_lip x N lip features (25 Hz)
    DIR/<file_id>/audio.faeb      4T x n_mels x 1 filterbank-like features (100 Hz)
    DIR/<file_id>/identity.faeb   T x D_I x 1 identity stream (25 Hz)
    DIR/<file_id>/centroids.faeb  1 x D_I x N true speaker centroids

Feature payloads are float32, so a loaded corpus is the float32-rounded
version of the generated one.
"""

from __future__ import annotations

import json
from pathlib import Path

from .features import AUDIO_RATE
from .io import read_faeb, read_rttm, save_rttm, write_faeb
from .postproc import timeline_to_labels
from .synth import SynthSession
from .timeline import Timeline


def save_corpus(out_dir, sessions, split: dict[str, str], config: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    manifest = {
        "sessions": [
            {
                "file_id": s.file_id,
                "split": split[s.file_id],
                "speakers": list(s.speakers),
                "frames": int(s.frames),
                "frame_rate": int(s.frame_rate),
            }
            for s in sessions
        ]
    }
    (out / "corpus.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    refs = [s.reference() for s in sessions]
    save_rttm(out / "ref.rttm", refs)
    for part in ("train", "dev"):
        save_rttm(out / f"{part}.rttm", [r for r in refs if split[r.file_id] == part])
    for s in sessions:
        d = out / s.file_id
        d.mkdir(exist_ok=True)
        write_faeb(d / "visual.faeb", s.visual, s.frame_rate)
        write_faeb(d / "audio.faeb", s.audio[:, :, None], AUDIO_RATE)
        write_faeb(d / "identity.faeb", s.identity[:, :, None], s.frame_rate)
        write_faeb(d / "centroids.faeb", s.centroids[None], 0.0)


def load_corpus(corpus_dir, split: str | None = None) -> list[SynthSession]:
    """Load sessions, optionally only those of one split ("train" or "dev")."""
    root = Path(corpus_dir)
    manifest = json.loads((root / "corpus.json").read_text())
    refs = read_rttm(root / "ref.rttm")
    out = []
    for entry in manifest["sessions"]:
        if split not in (None, "all") and entry["split"] != split:
            continue
        fid = entry["file_id"]
        d = root / fid
        ref = refs.get(fid, Timeline(fid))
        labels = timeline_to_labels(ref, entry["frames"], entry["frame_rate"], entry["speakers"])
        out.append(
            SynthSession(
                file_id=fid,
                labels=labels,
                visual=read_faeb(d / "visual.faeb").data,
                audio=read_faeb(d / "audio.faeb").data[:, :, 0],
                identity=read_faeb(d / "identity.faeb").data[:, :, 0],
                centroids=read_faeb(d / "centroids.faeb").data[0],
                speakers=list(entry["speakers"]),
                frame_rate=entry["frame_rate"],
            )
        )
    return out


def load_config(corpus_dir) -> dict:
    return json.loads((Path(corpus_dir) / "config.json").read_text())


def split_map(sessions, train_ratio: float) -> dict[str, str]:
    k = int(round(train_ratio * len(sessions)))
    return {s.file_id: ("train" if i < k else "dev") for i, s in enumerate(sessions)}

