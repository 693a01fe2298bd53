import numpy as np
import pytest

from affact.data import calibrate_enlargement, enlarge_detection
from affact.geometry import aligned_box, source_to_output
from affact.synth import (
    ATTRIBUTES, SynthConfig, face_rect, head_outline, oracle_flags, simulate_detection, synth_generate, synth_sample, to_canvas,
)


@pytest.fixture(scope="module")
def samples():
    return synth_generate(SynthConfig(seed=7), 1000)


def test_generation_is_deterministic():
    a = synth_sample(SynthConfig(seed=1), 5)
    b = synth_sample(SynthConfig(seed=1), 5)
    assert a.image.tobytes() == b.image.tobytes() and a.landmarks == b.landmarks
    assert synth_sample(SynthConfig(seed=2), 5).image.tobytes() != a.image.tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_attributes=0)
    assert SynthConfig(n_attributes=3).names == list(ATTRIBUTES[:3])


def test_glasses_bar_is_drawn(samples):
    with_glasses = [s for s in samples[:60] if s.flags["Eyeglasses"]]
    assert with_glasses
    for s in with_glasses:
        x, y = to_canvas(s.placement, 0.0, 0.0)
        assert np.max(s.image[int(round(y)), int(round(x))]) < 0.3


def test_aligned_box_contains_the_head(samples):
    inside = 0
    for s in samples:
        fwd = source_to_output(aligned_box(s.landmarks), 100, 100)
        pts = np.array([fwd(p) for p in head_outline(s)])
        inside += bool(np.all((pts >= 0) & (pts <= 99)))
    assert inside >= 0.99 * len(samples)


def test_pixel_oracle_recovers_every_label(samples):
    for s in samples:
        found = oracle_flags(s.image, s.placement)
        assert found == s.flags


def test_labels_match_flags(samples):
    s = samples[0]
    assert s.attributes == tuple(1 if s.flags[n] else -1 for n in ATTRIBUTES)


def test_simulated_detection_covers_the_face(samples):
    rng = np.random.default_rng(0)
    for s in samples[:200]:
        r = simulate_detection(s, rng)
        cx, cy = to_canvas(s.placement, 0.0, 0.5)
        assert r.x < cx < r.x + r.w and r.y < cy < r.y + r.h


def test_enlarged_face_box_is_the_unrotated_crop_box(samples):
    for s in samples[:50]:
        box, det = aligned_box(s.landmarks), enlarge_detection(face_rect(s))
        assert det.alpha == 0.0
        assert det.center == pytest.approx(box.center, abs=1e-9)
        assert det.width == pytest.approx(box.width, rel=1e-12)


def test_calibration_recovers_the_default_factor(samples):
    rng = np.random.default_rng(3)
    rects = [simulate_detection(s, rng) for s in samples]
    assert calibrate_enlargement([s.landmarks for s in samples], rects) == pytest.approx(1.6, rel=0.02)
