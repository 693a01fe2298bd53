import hashlib
import logging

import numpy as np
import pytest

from affact.augment import (
    EpochStream, PerturbConfig, epoch_order, epoch_stream, record_rng, render_training_example,
    sample_perturbation,
)
from affact.data import DatasetRecord
from affact.geometry import Perturbation, aligned_box, box_to_affine
from affact.raster import hflip, warp
from affact.synth import SynthConfig, synth_generate


@pytest.fixture(scope="module")
def faces():
    return synth_generate(SynthConfig(seed=3), 24)


def records(faces):
    return [DatasetRecord(f"{i}", landmarks=f.landmarks, attributes=f.attributes, image=f.image)
            for i, f in enumerate(faces)]


def test_config_validation():
    with pytest.raises(ValueError):
        PerturbConfig(std_angle=-1)
    with pytest.raises(ValueError):
        PerturbConfig(flip_prob=1.5)
    assert PerturbConfig.for_resolution(32).std_blur == pytest.approx(3 * 32 / 224)


def test_identity_config_draws_identity():
    cfg = PerturbConfig(0, 0, 1, 0, 0, 0)
    for i in range(20):
        assert sample_perturbation(cfg, record_rng(1, 0, i)).is_identity()


def test_same_seed_same_draws():
    cfg = PerturbConfig()
    a = [sample_perturbation(cfg, record_rng(9, 2, i)) for i in range(10)]
    b = [sample_perturbation(cfg, record_rng(9, 2, i)) for i in range(10)]
    assert a == b


def test_epoch_enters_the_draw():
    cfg = PerturbConfig()
    assert sample_perturbation(cfg, record_rng(9, 0, 4)) != sample_perturbation(cfg, record_rng(9, 1, 4))


def test_angle_std_in_chi_square_band():
    cfg = PerturbConfig()
    angles = [sample_perturbation(cfg, record_rng(0, 0, i)).r_alpha for i in range(10_000)]
    assert 19.0 <= np.std(angles, ddof=1) <= 21.0


def test_scale_is_clamped():
    cfg = PerturbConfig(mean_scale=0.1, std_scale=5.0)
    scales = [sample_perturbation(cfg, record_rng(0, 0, i)).r_s for i in range(500)]
    assert min(scales) == 0.1


def test_identity_render_equals_aligned_crop(faces):
    f = faces[0]
    cfg = PerturbConfig.identity(48)
    out = render_training_example(f.image, f.landmarks, Perturbation.identity(), cfg)
    box = aligned_box(f.landmarks)
    assert np.array_equal(out, warp(f.image, box_to_affine(box, 48, 48), 48, 48))


def test_flip_only_equals_hflip(faces):
    f = faces[1]
    cfg = PerturbConfig.identity(40)
    plain = render_training_example(f.image, f.landmarks, Perturbation.identity(), cfg)
    flipped = render_training_example(f.image, f.landmarks, Perturbation(flip=True), cfg)
    assert np.max(np.abs(flipped - hflip(plain))) < 1e-6


def test_blur_reduces_edge_gradient():
    img = np.zeros((64, 64, 3))
    img[:, 32:] = 1.0
    from affact.geometry import Landmarks
    lm = Landmarks((28, 24), (36, 24), (29, 34), (35, 34))
    cfg = PerturbConfig.identity(64)
    sharp = render_training_example(img, lm, Perturbation.identity(), cfg)
    soft = render_training_example(img, lm, Perturbation(sigma=5.0), cfg)
    assert np.abs(np.diff(soft, axis=1)).max() < np.abs(np.diff(sharp, axis=1)).max()


def test_epoch_visits_every_record_once(faces):
    stream = EpochStream(records(faces), PerturbConfig.for_resolution(16), seed=5, batch_size=7)
    seen = np.concatenate([b.indices for b in stream.epoch(0)])
    assert sorted(seen.tolist()) == list(range(len(faces)))
    assert len(stream) == 4
    assert not np.array_equal(seen, np.concatenate([b.indices for b in stream.epoch(1)]))


def test_short_final_batch(faces):
    batches = list(epoch_stream(records(faces)[:10], PerturbConfig.for_resolution(16), seed=1))
    assert len(batches) == 1 and batches[0].images.shape == (10, 16, 16, 3)
    assert batches[0].labels.dtype == np.int8


def _digest(stream, epoch):
    h = hashlib.sha256()
    for b in stream.epoch(epoch):
        h.update(b.images.tobytes())
        h.update(b.labels.tobytes())
        h.update(b.indices.tobytes())
    return h.hexdigest()


@pytest.mark.parametrize("workers", [2, 8])
def test_stream_is_independent_of_worker_count(faces, workers):
    cfg = PerturbConfig.for_resolution(24)
    one = EpochStream(records(faces), cfg, seed=11, batch_size=5, workers=1)
    many = EpochStream(records(faces), cfg, seed=11, batch_size=5, workers=workers, prefetch=3)
    assert _digest(one, 2) == _digest(many, 2)


def test_unreadable_records_are_skipped(faces, tmp_path, caplog):
    recs = records(faces)[:6]
    recs[2] = DatasetRecord("broken", path=tmp_path / "missing.png", landmarks=recs[2].landmarks,
                            attributes=recs[2].attributes)
    stream = EpochStream(recs, PerturbConfig.for_resolution(16), seed=0, batch_size=4, workers=2)
    with caplog.at_level(logging.WARNING):
        batches = list(stream.epoch(0))
    assert sum(len(b.indices) for b in batches) == 5
    assert stream.skipped[0] == ["broken"]
    assert "skipped 1 unreadable" in caplog.text


def test_epoch_order_is_a_permutation():
    order = epoch_order(3, 7, 100)
    assert sorted(order.tolist()) == list(range(100))
    assert np.array_equal(order, epoch_order(3, 7, 100))


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        EpochStream([], PerturbConfig(), 0)
