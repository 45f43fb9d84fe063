import numpy as np
import pytest

from casanet.postproc import (
    BlockPrediction,
    binarize,
    labels_to_timeline,
    median_filter,
    overlap_average,
    postprocess,
    timeline_to_labels,
)
from casanet.timeline import Segment, Timeline


class TestMedian:
    def test_isolated_spike_removed(self, backend):
        np.testing.assert_array_equal(median_filter([0, 0, 1, 0, 0], 3), np.zeros(5))

    def test_isolated_gap_filled(self, backend):
        np.testing.assert_array_equal(median_filter([1, 1, 0, 1, 1], 3), np.ones(5))

    def test_window_one_is_identity(self, backend, rng):
        x = rng.random(20)
        np.testing.assert_array_equal(median_filter(x, 1), x)

    def test_edges_replicated(self, backend):
        np.testing.assert_array_equal(median_filter([1, 0, 0, 0, 0], 5), [1, 0, 0, 0, 0])
        np.testing.assert_array_equal(median_filter([0, 1, 0, 0, 0], 5), np.zeros(5))
        np.testing.assert_array_equal(median_filter([1, 1, 0, 0, 0], 5), [1, 1, 0, 0, 0])

    def test_columnwise(self, backend):
        x = np.array([[0, 1], [1, 1], [0, 0], [0, 1], [0, 1]], dtype=float)
        np.testing.assert_array_equal(median_filter(x, 3), [[0, 1], [0, 1], [0, 1], [0, 1], [0, 1]])

    def test_matches_brute_force(self, backend, rng):
        x = rng.random(60)
        w = 11
        pad = np.concatenate([np.full(5, x[0]), x, np.full(5, x[-1])])
        expect = [sorted(pad[i : i + w])[5] for i in range(60)]
        np.testing.assert_array_equal(median_filter(x, w), expect)

    @pytest.mark.parametrize("window", [0, 2, -3])
    def test_bad_window(self, window):
        with pytest.raises(ValueError, match="odd"):
            median_filter([0.0, 1.0], window)


class TestOverlapAverage:
    def test_overlap_is_mean(self):
        a = BlockPrediction(np.full((10, 1), 0.8), 0.0, 5.0)
        b = BlockPrediction(np.full((10, 1), 0.4), 1.0, 5.0)
        merged = overlap_average([a, b]).merged[:, 0]
        np.testing.assert_allclose(merged[:5], 0.8)
        np.testing.assert_allclose(merged[5:10], 0.6)
        np.testing.assert_allclose(merged[10:], 0.4)

    def test_constant_blocks_reconstruct_exactly(self, rng):
        values = rng.random(3)
        blocks = [BlockPrediction(np.full((200, 3), values), o) for o in (0.0, 4.0, 8.0, 10.0)]
        merged = overlap_average(blocks, 18.0).merged
        assert merged.shape == (450, 3)
        assert np.array_equal(merged, np.broadcast_to(values, merged.shape))

    def test_gap_raises(self):
        blocks = [BlockPrediction(np.zeros((5, 1)), 0.0, 1.0), BlockPrediction(np.zeros((5, 1)), 6.0, 1.0)]
        with pytest.raises(ValueError, match="frame 5"):
            overlap_average(blocks)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            overlap_average([])


def test_binarize_threshold_inclusive():
    np.testing.assert_array_equal(binarize(np.array([0.49, 0.5, 0.9])), [0, 1, 1])
    with pytest.raises(ValueError):
        binarize(np.zeros(2), 1.0)


def test_one_second_of_frames_is_one_segment():
    labels = np.zeros((40, 1), dtype=np.int8)
    labels[:25] = 1
    t = labels_to_timeline(labels, 25, ["A"], "f")
    assert t.segments == [Segment("A", 0.0, 1.0)]


def test_labels_round_trip(rng):
    for _ in range(20):
        labels = (rng.random((120, 3)) < 0.4).astype(np.int8)
        t = labels_to_timeline(labels, 25, ["a", "b", "c"], "f")
        np.testing.assert_array_equal(timeline_to_labels(t, 120, 25, ["a", "b", "c"]), labels)


def test_rasterise_uses_frame_centres():
    t = Timeline("f", [Segment("A", 0.03, 0.05)])  # covers centres 0.06 only (frame 1)
    np.testing.assert_array_equal(timeline_to_labels(t, 4, 25, ["A"])[:, 0], [0, 1, 0, 0])
    t = Timeline("f", [Segment("B", 0.0, 1.0)])
    assert timeline_to_labels(t, 4, 25, ["A"]).sum() == 0


def test_postprocess_pipeline():
    s = np.zeros((200, 2))
    s[50:150, 0] = 0.9
    s[100, 1] = 0.9
    labels = postprocess([BlockPrediction(s, 0.0)], 8.0)
    assert labels[50:150, 0].all() and labels[:50, 0].sum() == 0
    assert labels[:, 1].sum() == 0
