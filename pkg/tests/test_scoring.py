import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from casanet import kernels
from casanet.scoring import (
    DerReport,
    der,
    format_report,
    linear_assignment,
    merge_reports,
    optimal_speaker_map,
    overlap_matrix,
    score_corpus,
)
from casanet.timeline import Timeline

from oracles import brute_force_der, random_timeline


def tl(file_id, *segs):
    t = Timeline(file_id)
    for spk, a, b in segs:
        t.add(spk, a, b - a)
    return t


class TestAssignment:
    def test_two_by_two_optimum_is_five(self, backend):
        w = np.array([[1.0, 2.0], [3.0, 1.0]])
        pairs = linear_assignment(w)
        assert sorted(pairs) == [(0, 1), (1, 0)]
        assert sum(w[i, j] for i, j in pairs) == 5.0

    def test_rectangular_and_zero_weights(self, backend):
        w = np.array([[0.0, 4.0, 1.0]])
        assert linear_assignment(w) == [(0, 1)]
        assert linear_assignment(np.zeros((2, 2))) == []
        assert linear_assignment(np.zeros((0, 3))) == []

    def test_matches_scipy(self, backend, rng):
        scipy_opt = pytest.importorskip("scipy.optimize")
        for _ in range(100):
            shape = tuple(rng.integers(1, 7, size=2))
            w = rng.random(shape)
            ours = sum(w[i, j] for i, j in linear_assignment(w))
            r, c = scipy_opt.linear_sum_assignment(w, maximize=True)
            assert ours == pytest.approx(w[r, c].sum(), abs=1e-12)


class TestHandCases:
    def test_partial_miss(self, backend):
        ref = tl("f", ("A", 0, 4), ("B", 4, 8))
        hyp = tl("f", ("s1", 0, 3), ("s2", 4, 8))
        rep = der(ref, hyp)
        assert (rep.FA, rep.MISS, rep.SpkErr, rep.TOTAL) == (0.0, 1.0, 0.0, 8.0)
        assert rep.DER == 0.125
        assert rep.mapping == {"s1": "A", "s2": "B"}

    def test_merged_overlap(self, backend):
        ref = tl("f", ("A", 0, 4), ("B", 2, 6))
        hyp = tl("f", ("s1", 0, 6))
        rep = der(ref, hyp)
        assert (rep.FA, rep.MISS, rep.SpkErr, rep.TOTAL) == (0.0, 2.0, 2.0, 8.0)
        assert rep.DER == 0.5

    def test_empty_hypothesis_is_all_miss(self):
        rep = der(tl("f", ("A", 1, 3)), Timeline("f"))
        assert rep.MISS == 2.0 and rep.DER == 1.0

    def test_empty_reference(self):
        assert der(Timeline("f"), Timeline("f")).DER == 0.0
        assert der(Timeline("f"), tl("f", ("x", 0, 1))).DER == float("inf")

    def test_collar_excises_boundaries(self):
        ref = tl("f", ("A", 0, 4))
        hyp = tl("f", ("s", 0.2, 3.9))
        rep = der(ref, hyp, collar=0.25)
        assert rep.MISS == pytest.approx(0.0) and rep.TOTAL == pytest.approx(3.5)

    def test_errors(self):
        with pytest.raises(ValueError, match="collar"):
            der(Timeline("f"), Timeline("f"), collar=-1)
        with pytest.raises(ValueError, match="file ids"):
            der(Timeline("a"), Timeline("b"))


def test_overlap_matrix_and_map():
    ref = tl("f", ("A", 0, 4), ("B", 4, 8))
    hyp = tl("f", ("x", 3, 8))
    mat, rn, hn = overlap_matrix(ref, hyp)
    assert rn == ["A", "B"] and hn == ["x"]
    np.testing.assert_allclose(mat, [[1.0], [4.0]])
    assert optimal_speaker_map(ref, hyp) == {"x": "B"}


def test_random_against_raster_oracle_with_collar(backend):
    rng = np.random.default_rng(99)
    for k in range(40):
        ref = random_timeline(rng, "f", max_speakers=3, max_segments=4, prefix="r")
        hyp = random_timeline(rng, "f", max_speakers=3, max_segments=4, prefix="h")
        collar = [0.0, 0.25][k % 2]
        rep = der(ref, hyp, collar)
        fa, miss, spk, total = brute_force_der(ref, hyp, collar)
        assert rep.FA == pytest.approx(fa, abs=1e-9)
        assert rep.MISS == pytest.approx(miss, abs=1e-9)
        assert rep.SpkErr == pytest.approx(spk, abs=1e-9)
        assert rep.TOTAL == pytest.approx(total, abs=1e-9)


segments = st.lists(
    st.tuples(st.sampled_from("abc"), st.integers(0, 500), st.integers(1, 200)), max_size=6
)


def _from(file_id, segs):
    t = Timeline(file_id)
    for spk, a, d in segs:
        t.add(spk, a / 100, d / 100)
    return t


@settings(max_examples=150, deadline=None)
@given(segments, segments)
def test_der_properties(r, h):
    ref, hyp = _from("f", r), _from("f", h)
    rep = der(ref, hyp)
    assert rep.FA >= 0 and rep.MISS >= 0 and rep.SpkErr >= -1e-12
    assert rep.TOTAL == pytest.approx(ref.total_speech())
    assert der(ref, ref).DER == 0.0
    renamed = Timeline("f", [type(s)(s.speaker.upper(), s.start, s.duration) for s in hyp.segments])
    again = der(ref, renamed)
    assert (again.FA, again.MISS) == pytest.approx((rep.FA, rep.MISS))
    assert again.SpkErr == pytest.approx(rep.SpkErr)


def test_corpus_scoring_and_report():
    refs = {"a": tl("a", ("A", 0, 4)), "b": tl("b", ("B", 0, 2))}
    hyps = {"a": tl("a", ("x", 0, 4)), "zzz": tl("zzz", ("y", 0, 9))}
    per_file, total = score_corpus(refs, hyps)
    assert set(per_file) == {"a", "b"}
    assert total.TOTAL == 6.0 and total.MISS == 2.0
    text = format_report(per_file, total)
    assert text.splitlines()[-1].startswith("TOTAL")
    assert "DER= 33.33%" in text
    assert merge_reports(per_file.values()).as_dict() == total.as_dict()
    assert (DerReport(1, 2, 3, 10) + DerReport(0, 0, 0, 10)).DER == pytest.approx(0.3)
