import numpy as np
import pytest

from ecgbench.windows import aggregate, random_crop, tile_windows


class TestRandomCrop:
    def test_identity_when_exact(self):
        signal = np.arange(12.0).reshape(2, 6)
        assert np.array_equal(random_crop(signal, 6, seed=1), signal)

    def test_crop_is_source_slice(self):
        rng = np.random.default_rng(0)
        signal = rng.random((3, 1000))
        for seed in range(5):
            crop = random_crop(signal, 250, seed=seed)
            assert crop.shape == (3, 250)
            starts = [
                s
                for s in range(751)
                if np.array_equal(signal[:, s : s + 250], crop)
            ]
            assert len(starts) == 1

    def test_padding_centers_original(self):
        signal = np.ones((2, 100))
        padded = random_crop(signal, 250, seed=0)
        assert padded.shape == (2, 250)
        assert np.array_equal(padded[:, 75:175], signal)
        assert not padded[:, :75].any() and not padded[:, 175:].any()

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        signal = rng.random((2, 500))
        assert np.array_equal(random_crop(signal, 100, seed=7), random_crop(signal, 100, seed=7))

    def test_empty_signal(self):
        with pytest.raises(ValueError, match="nonempty"):
            random_crop(np.zeros((2, 0)), 10)


class TestTileWindows:
    def test_even_cover(self):
        signal = np.arange(1000.0).reshape(1, 1000)
        segments = tile_windows(signal, 500)
        starts = [int(seg[0, 0]) for seg in segments]
        assert starts == [0, 250, 500]

    def test_single_window(self):
        signal = np.arange(500.0).reshape(1, 500)
        assert len(tile_windows(signal, 500)) == 1

    def test_catchup_window(self):
        signal = np.arange(1001.0).reshape(1, 1001)
        segments = tile_windows(signal, 500)
        starts = [int(seg[0, 0]) for seg in segments]
        assert starts == [0, 250, 500, 501]

    def test_full_coverage_property(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            t = int(rng.integers(10, 400))
            length = int(rng.integers(3, 200))
            signal = np.arange(float(t)).reshape(1, t)
            segments = tile_windows(signal, length)
            if t <= length:
                continue  # padded single window
            covered = set()
            for seg in segments:
                start = int(seg[0, 0])
                covered.update(range(start, start + length))
            assert covered == set(range(t))

    def test_short_signal_padded(self):
        segments = tile_windows(np.ones((2, 10)), 30)
        assert len(segments) == 1 and segments[0].shape == (2, 30)


class TestAggregate:
    def test_examples(self):
        scores = np.array([[0.2, 0.9], [0.8, 0.1]])
        assert aggregate(scores, "max").tolist() == [0.8, 0.9]
        assert aggregate(scores, "mean").tolist() == [0.5, 0.5]

    def test_single_window_identity(self):
        row = np.array([[0.3, 0.6, 0.1]])
        assert aggregate(row, "max").tolist() == aggregate(row, "mean").tolist() == [0.3, 0.6, 0.1]

    def test_max_dominates_mean(self):
        rng = np.random.default_rng(3)
        scores = rng.random((7, 4))
        assert (aggregate(scores, "max") >= aggregate(scores, "mean") - 1e-12).all()

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            aggregate(np.zeros((0, 3)), "max")
        with pytest.raises(ValueError, match="unknown aggregation"):
            aggregate(np.zeros((1, 3)), "median")
