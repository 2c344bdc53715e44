import numpy as np
import pytest

from dedupcount import toygen
from dedupcount.counter import iou_matrix
from dedupcount.toygen import ToyConfig, batch_for, generate_batch, generate_sample, stream


def test_noise_free_true_boxes_score_one():
    batch = batch_for(ToyConfig(l=0.3, q=0.0), toygen.TRAIN_STREAM, 0, 256)
    assert np.all(batch.weights[batch.true_flags] == 1.0)


def test_pure_noise_is_independent_of_truth():
    a = batch_for(ToyConfig(l=0.3, q=1.0), toygen.TRAIN_STREAM, 0, 512)
    b = batch_for(ToyConfig(l=0.3, q=1.0), toygen.TRAIN_STREAM, 0, 512)
    np.testing.assert_array_equal(a.weights, b.weights)
    # the same stream with a different l changes the boxes but not the noise
    c = batch_for(ToyConfig(l=0.7, q=1.0), toygen.TRAIN_STREAM, 0, 512)
    np.testing.assert_array_equal(a.weights, c.weights)
    assert abs(a.weights[a.true_flags].mean() - a.weights[~a.true_flags].mean()) < 0.03


def test_no_true_boxes_means_zero_weights():
    batch = batch_for(ToyConfig(l=0.3, q=0.0), toygen.TRAIN_STREAM, 0, 512)
    empty = batch.counts == 0
    assert empty.any()
    assert np.all(batch.weights[empty] == 0.0)


def test_same_seed_same_bytes():
    cfg = ToyConfig(l=0.4, q=0.25, seed=7)
    a = batch_for(cfg, toygen.TRAIN_STREAM, 3, 64)
    b = batch_for(cfg, toygen.TRAIN_STREAM, 3, 64)
    for field in ("boxes", "weights", "true_flags", "counts", "scores"):
        assert getattr(a, field).tobytes() == getattr(b, field).tobytes()


def test_substreams_differ():
    cfg = ToyConfig(l=0.4, q=0.25)
    base = batch_for(cfg, toygen.TRAIN_STREAM, 0, 64).boxes
    assert not np.array_equal(base, batch_for(cfg, toygen.TRAIN_STREAM, 1, 64).boxes)
    assert not np.array_equal(base, batch_for(cfg, toygen.EVAL_STREAM, 0, 64).boxes)
    assert not np.array_equal(base, batch_for(ToyConfig(l=0.4, q=0.25, seed=1), toygen.TRAIN_STREAM, 0, 64).boxes)


def test_stream_is_philox():
    assert isinstance(stream(0, 0, 0).bit_generator, np.random.Philox)


def test_mean_count_of_a_batch():
    batch = batch_for(ToyConfig(l=0.5, q=0.5), toygen.TRAIN_STREAM, 0, 1024)
    assert batch.counts.mean() == pytest.approx(5.0, abs=0.3)


def test_label_histogram_is_uniform():
    total = 100_000
    counts = np.concatenate([batch_for(ToyConfig(l=0.5, q=0.5), toygen.EVAL_STREAM, i, 10_000).counts
                             for i in range(total // 10_000)])
    hist = np.bincount(counts, minlength=11)
    p = 1 / 11
    sigma = np.sqrt(total * p * (1 - p))
    assert hist.size == 11
    assert np.all(np.abs(hist - total * p) <= 3 * sigma)


@pytest.mark.parametrize("l", [0.05, 0.5, 1.0])
def test_boxes_inside_with_side_l(l):
    batch = batch_for(ToyConfig(l=l, q=0.3), toygen.TRAIN_STREAM, 0, 512)
    b = batch.boxes
    assert b.min() >= 0.0 and b.max() <= 1.0
    np.testing.assert_allclose(b[..., 2] - b[..., 0], l, atol=1e-12)
    np.testing.assert_allclose(b[..., 3] - b[..., 1], l, atol=1e-12)


def test_flags_match_counts():
    batch = batch_for(ToyConfig(l=0.2, q=0.1), toygen.TRAIN_STREAM, 0, 512)
    np.testing.assert_array_equal(batch.true_flags.sum(axis=1), batch.counts)


def test_scores_are_max_iou_with_true_boxes():
    batch = batch_for(ToyConfig(l=0.4, q=0.0), toygen.TRAIN_STREAM, 0, 32)
    for s in batch:
        overlap = iou_matrix(s.boxes)
        expected = overlap[:, s.true_flags].max(axis=1) if s.count else np.zeros(10)
        np.testing.assert_allclose(s.scores, expected)


@pytest.mark.parametrize("q", [0.0, 0.25, 0.5, 1.0])
def test_weight_bounds(q):
    batch = batch_for(ToyConfig(l=0.3, q=q), toygen.TRAIN_STREAM, 0, 512)
    lo = batch.scores * (1 - q)
    assert np.all(batch.weights >= lo - 1e-15)
    assert np.all(batch.weights <= lo + q + 1e-15)
    assert batch.weights.min() >= 0 and batch.weights.max() <= 1


def test_invalid_config():
    for kwargs in ({"l": 0.0, "q": 0.0}, {"l": 1.5, "q": 0.0}, {"l": 0.5, "q": -0.1},
                   {"l": 0.5, "q": 0.0, "max_count": 11}):
        with pytest.raises(ValueError):
            ToyConfig(**kwargs)
    with pytest.raises(ValueError):
        generate_batch(ToyConfig(l=0.5, q=0.0), 0, stream(0, 0, 0))


def test_single_sample():
    s = generate_sample(ToyConfig(l=0.5, q=0.0), stream(0, 0, 0))
    assert s.boxes.shape == (10, 4)
    assert int(s.true_flags.sum()) == s.count


def test_dump_format(tmp_path):
    batch = batch_for(ToyConfig(l=0.5, q=0.5), toygen.DUMP_STREAM, 0, 2)
    path = tmp_path / "samples.csv"
    toygen.dump_samples(batch, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == toygen.SAMPLE_COLUMNS
    assert len(lines) == 2 + 2 * 10
    fields = lines[2].split(",")
    assert float(fields[6]) == batch.weights[0, 0]
    assert int(fields[8]) == batch.counts[0]
