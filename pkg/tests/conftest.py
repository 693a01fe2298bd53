import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_image(h=32, w=32, channels=3, seed=0):
    """Low-frequency random image (sum of a few sinusoids) in [0, 1]."""
    g = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w].astype(float)
    img = np.zeros((h, w, channels))
    for c in range(channels):
        for _ in range(3):
            fx, fy = g.uniform(0.02, 0.08, 2)
            ph = g.uniform(0, 2 * np.pi)
            img[:, :, c] += np.sin(2 * np.pi * (fx * x + fy * y) + ph)
    img -= img.min()
    return img / img.max()


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
