import numpy as np
import pytest

from casanet.fusion import CasaConfig, CasaModel
from casanet.io import read_rttm
from casanet.refine import (
    RefineConfig,
    extract_speaker_embeddings,
    read_history,
    refine_loop,
    score_logs,
    write_history,
)
from casanet.synth import SynthConfig, generate
from casanet.tensor import make_rng
from casanet.timeline import Timeline
from casanet.train import TrainConfig


@pytest.fixture(scope="module")
def corpus():
    return generate(SynthConfig(sessions=3, length=16, seed=21))


def test_fallback_for_silent_speaker(corpus):
    s = corpus[0]
    log = Timeline(s.file_id)
    log.add(s.speakers[0], 0.0, 4.0)
    emb = extract_speaker_embeddings(s, log)
    assert emb.fallback == [False, True, True]
    g = s.identity.mean(axis=0)
    np.testing.assert_allclose(emb.vectors[:, 1], g / np.linalg.norm(g))
    assert emb.source == "log"


def test_overlap_frames_are_excluded(corpus):
    s = corpus[0]
    log = Timeline(s.file_id)
    log.add(s.speakers[0], 0.0, 2.0)
    log.add(s.speakers[1], 1.0, 2.0)
    emb = extract_speaker_embeddings(s, log)
    single = s.identity[:25].mean(axis=0)  # frames 0..24 have only speaker 0
    np.testing.assert_allclose(emb.vectors[:, 0], single / np.linalg.norm(single))


def test_score_logs_perfect(corpus):
    logs = {s.file_id: s.reference() for s in corpus}
    assert score_logs(corpus, logs).DER == 0.0


def test_history_round_trip(tmp_path):
    hist = [{"round": 0, "DER": 0.5}, {"round": 1, "DER": 0.2, "loss": [1.0, 0.5]}]
    write_history(tmp_path / "h.json", hist)
    assert read_history(tmp_path / "h.json") == hist


def test_zero_rounds_only_scores_round0(corpus):
    logs = {s.file_id: s.reference() for s in corpus}
    model = CasaModel()
    before = [p.value.copy() for p in model.all_params()]
    out, hist = refine_loop(model, corpus[:2], corpus[2:], logs, RefineConfig(rounds=0), TrainConfig())
    assert out is model
    assert all(np.array_equal(p.value, v) for p, v in zip(model.all_params(), before))
    assert len(hist) == 1 and hist[0]["DER"] == 0.0
    with pytest.raises(ValueError):
        RefineConfig(rounds=-1)


def test_one_round_writes_artifacts(corpus, tmp_path):
    logs = {s.file_id: s.reference() for s in corpus}
    model = CasaModel(CasaConfig(), seed=0)
    cfg = RefineConfig(rounds=1, epochs=1)
    _, hist = refine_loop(model, corpus[:2], corpus[2:], logs, cfg, TrainConfig(seed=0), tmp_path, make_rng(0))
    assert [h["round"] for h in hist] == [0, 1]
    assert len(hist[1]["loss"]) == 2
    for name in ("dev_ref.rttm", "round_0.rttm", "round_1.rttm", "refine_history.json"):
        assert (tmp_path / name).exists()
    assert set(read_rttm(tmp_path / "dev_ref.rttm")) == {corpus[2].file_id}
    assert read_history(tmp_path / "refine_history.json") == hist


def test_loop_is_deterministic(corpus, tmp_path):
    def once(d):
        logs = {s.file_id: s.reference() for s in corpus}
        _, hist = refine_loop(
            CasaModel(seed=1), corpus[:2], corpus[2:], logs, RefineConfig(rounds=2, epochs=1),
            TrainConfig(seed=1), d, make_rng(3),
        )
        return hist, (d / "round_2.rttm").read_bytes()

    assert once(tmp_path / "a") == once(tmp_path / "b")
