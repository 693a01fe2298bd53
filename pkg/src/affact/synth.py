"""Procedural toy faces with binary visual attributes.

A face is drawn in a local frame whose unit is the eye-to-mouth distance:
the eye center is the origin, the mouth center sits at (0, 1) and y points
down. The frame is rotated, scaled and translated into the canvas; the exact
landmarks, labels and placement are returned with every image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .data import DEFAULT_ENLARGEMENT, Rect
from .geometry import BOX_SIZE_PER_DISTANCE, EYE_TO_BOTTOM, EYE_TO_TOP, Landmarks, Point

ATTRIBUTES = (
    "Eyeglasses", "Wearing_Hat", "Mustache", "Mouth_Open",
    "Round_Face", "Dark_Hair", "Wearing_Earrings", "Thick_Eyebrows",
)
# Probability of each attribute being present.
PRIORS = (0.35, 0.3, 0.4, 0.5, 0.45, 0.5, 0.35, 0.45)

# Shapes in face units; every oracle probe sits >= 0.13 units inside or
# outside the shape it tests.
HEAD_CENTER = (0.0, 0.45)
HEAD_AXES = {False: (1.1, 1.65), True: (1.35, 1.45)}  # keyed by Round_Face
HAIR_CENTER, HAIR_AXES, HAIR_BOTTOM = (0.0, 0.2), (1.6, 1.75), 0.6
EYE_X, EYE_RADIUS = 0.5, 0.13
BROW_HALF_WIDTH = 0.27
BROW_THIN, BROW_THICK = (-0.335, -0.265), (-0.62, -0.26)  # top, bottom
GLASSES_BAR = (-0.85, -0.15, 0.85, 0.15)
MUSTACHE = (-0.45, 0.58, 0.45, 0.84)
MOUTH_HALF_WIDTH = 0.4
MOUTH_GAP_AXES = (0.42, 0.22)
HAT = (-1.5, -2.2, 1.5, -1.05)  # left, top, right, bottom
EARRING_Y, EARRING_RADIUS, EARRING_GAP = 1.0, 0.16, 0.2
# Detector face box in face units: enlarging it by the default factor yields
# the landmark crop box, and it shares that box's center.
FACE_BOX_SIDE = BOX_SIZE_PER_DISTANCE / DEFAULT_ENLARGEMENT
FACE_BOX_DROP = 0.5 * (EYE_TO_BOTTOM - EYE_TO_TOP) * BOX_SIZE_PER_DISTANCE

DARK = np.array([0.08, 0.06, 0.05])
BLOND = np.array([0.95, 0.85, 0.25])
HAT_COLOR = np.array([0.96, 0.96, 0.98])
GOLD = np.array([1.0, 0.85, 0.15])
LIP = np.array([0.45, 0.1, 0.12])
MOUTH_GAP = np.array([0.12, 0.02, 0.03])


@dataclass(frozen=True)
class SynthConfig:
    n_attributes: int = 8
    canvas: int = 112
    distance_range: tuple = (12.0, 16.0)  # eye-to-mouth distance in canvas pixels
    rotation_range: float = 25.0  # degrees, uniform in [-r, r]
    translation_range: float = 8.0  # canvas pixels, uniform per axis
    noise_std: float = 0.015
    supersample: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_attributes <= len(ATTRIBUTES):
            raise ValueError(f"n_attributes must lie in [1, {len(ATTRIBUTES)}]")
        if self.canvas <= 0 or self.supersample <= 0:
            raise ValueError("canvas and supersample must be positive")

    @property
    def names(self) -> list:
        return list(ATTRIBUTES[:self.n_attributes])


class Placement(NamedTuple):
    eye_center: Point
    distance: float
    angle: float  # degrees


class SynthSample(NamedTuple):
    image: np.ndarray
    landmarks: Landmarks
    attributes: tuple  # +-1 per configured attribute
    placement: Placement
    flags: dict  # every attribute flag, including unlabeled ones


def to_canvas(placement: Placement, p: float, q: float) -> Point:
    r = math.radians(placement.angle)
    cs, sn = math.cos(r), math.sin(r)
    d = placement.distance
    ex, ey = placement.eye_center
    return Point(ex + d * (cs * p - sn * q), ey + d * (sn * p + cs * q))


def to_local(placement: Placement, x, y):
    r = math.radians(placement.angle)
    cs, sn = math.cos(r), math.sin(r)
    d = placement.distance
    dx, dy = x - placement.eye_center.x, y - placement.eye_center.y
    return (cs * dx + sn * dy) / d, (-sn * dx + cs * dy) / d


def _ellipse(p, q, center, axes):
    return ((p - center[0]) / axes[0]) ** 2 + ((q - center[1]) / axes[1]) ** 2 <= 1.0


def _rect(p, q, left, top, right, bottom):
    return (p >= left) & (p <= right) & (q >= top) & (q <= bottom)


def head_half_width(round_face: bool, q: float) -> float:
    a, b = HEAD_AXES[round_face]
    t = (q - HEAD_CENTER[1]) / b
    return a * math.sqrt(max(0.0, 1.0 - t * t))


def sample_flags(rng: np.random.Generator) -> dict:
    return {name: bool(rng.random() < prior) for name, prior in zip(ATTRIBUTES, PRIORS)}


def paint_face(p: np.ndarray, q: np.ndarray, flags: dict, skin: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Colors of the face at local coordinates (p, q); shape p.shape + (3,)."""
    out = np.broadcast_to(background, p.shape + (3,)).copy()

    def paint(mask, color):
        out[mask] = color

    hair = DARK * 1.6 if flags["Dark_Hair"] else BLOND
    paint(_ellipse(p, q, HAIR_CENTER, HAIR_AXES) & (q < HAIR_BOTTOM), hair)
    round_face = flags["Round_Face"]
    paint(_ellipse(p, q, HEAD_CENTER, HEAD_AXES[round_face]), skin)
    if flags["Wearing_Earrings"]:
        x = head_half_width(round_face, EARRING_Y) + EARRING_GAP
        for side in (-1.0, 1.0):
            paint(_ellipse(p, q, (side * x, EARRING_Y), (EARRING_RADIUS, EARRING_RADIUS)), GOLD)
    top, bottom = BROW_THICK if flags["Thick_Eyebrows"] else BROW_THIN
    for side in (-1.0, 1.0):
        paint(_rect(p, q, side * EYE_X - BROW_HALF_WIDTH, top, side * EYE_X + BROW_HALF_WIDTH, bottom), DARK)
        paint(_ellipse(p, q, (side * EYE_X, 0.0), (EYE_RADIUS, EYE_RADIUS)), DARK)
    if flags["Eyeglasses"]:
        paint(_rect(p, q, *GLASSES_BAR), DARK)
        for side in (-1.0, 1.0):
            r = np.hypot(p - side * EYE_X, q)
            paint((r >= 0.28) & (r <= 0.36), DARK)
    if flags["Mustache"]:
        paint(_rect(p, q, *MUSTACHE), DARK)
    if flags["Mouth_Open"]:
        paint(_ellipse(p, q, (0.0, 1.0), MOUTH_GAP_AXES), MOUTH_GAP)
    else:
        paint(_rect(p, q, -MOUTH_HALF_WIDTH, 0.96, MOUTH_HALF_WIDTH, 1.04), LIP)
    if flags["Wearing_Hat"]:
        paint(_rect(p, q, *HAT), HAT_COLOR)
    return out


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))))


def synth_sample(cfg: SynthConfig, index: int) -> SynthSample:
    """The ``index``-th sample of the dataset defined by ``cfg`` (pure in both)."""
    rng = sample_rng(cfg.seed, index)
    flags = sample_flags(rng)
    skin = rng.uniform(0.6, 0.8) * np.array([1.0, 0.8, 0.66])
    background = np.full(3, rng.uniform(0.3, 0.6))
    c = 0.5 * cfg.canvas
    d = float(rng.uniform(*cfg.distance_range))
    angle = float(rng.uniform(-cfg.rotation_range, cfg.rotation_range))
    jx, jy = rng.uniform(-cfg.translation_range, cfg.translation_range, size=2)
    # The eye center sits 0.3 face units above the canvas center so the head is centered.
    placement = Placement(Point(c + jx, c - 0.3 * d + jy), d, angle)
    ss = cfg.supersample
    offsets = (np.arange(ss) + 0.5) / ss - 0.5
    grid = np.arange(cfg.canvas, dtype=np.float64)
    y = (grid[:, None] + offsets[None, :]).ravel()
    x = y.copy()
    p, q = to_local(placement, x[None, :], y[:, None])
    colors = paint_face(p, q, flags, skin, background)
    img = colors.reshape(cfg.canvas, ss, cfg.canvas * ss * 3).sum(axis=1)
    img = img.reshape(cfg.canvas, cfg.canvas, ss, 3).sum(axis=2) / (ss * ss)
    if cfg.noise_std > 0:
        img = img + rng.normal(0.0, cfg.noise_std, img.shape)
    img = np.clip(img, 0.0, 1.0)

    lm = Landmarks(
        eye_right=to_canvas(placement, EYE_X, 0.0),
        eye_left=to_canvas(placement, -EYE_X, 0.0),
        mouth_right=to_canvas(placement, MOUTH_HALF_WIDTH, 1.0),
        mouth_left=to_canvas(placement, -MOUTH_HALF_WIDTH, 1.0),
        nose=to_canvas(placement, 0.0, 0.55),
    )
    labels = tuple(1 if flags[n] else -1 for n in cfg.names)
    return SynthSample(img, lm, labels, placement, flags)


def synth_generate(cfg: SynthConfig, n: int, start: int = 0) -> list:
    return [synth_sample(cfg, i) for i in range(start, start + n)]


def head_rect(sample: SynthSample) -> Rect:
    """Tight axis-aligned bounding rectangle of the rendered head ellipse."""
    a, b = HEAD_AXES[sample.flags["Round_Face"]]
    pl = sample.placement
    r = math.radians(pl.angle)
    hx = pl.distance * math.hypot(a * math.cos(r), b * math.sin(r))
    hy = pl.distance * math.hypot(a * math.sin(r), b * math.cos(r))
    cx, cy = to_canvas(pl, *HEAD_CENTER)
    return Rect(cx - hx, cy - hy, 2 * hx, 2 * hy)


def head_outline(sample: SynthSample, n: int = 64) -> np.ndarray:
    a, b = HEAD_AXES[sample.flags["Round_Face"]]
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.array([to_canvas(sample.placement, HEAD_CENTER[0] + a * math.cos(s),
                               HEAD_CENTER[1] + b * math.sin(s)) for s in t])


def face_rect(sample: SynthSample) -> Rect:
    """Upright square a face detector is trained to report.

    It is centered where the landmark crop box is centered, and enlarging it
    by the default factor gives the crop box size. Like a real detector it
    ignores in-plane rotation.
    """
    pl = sample.placement
    side = FACE_BOX_SIDE * pl.distance
    cx, cy = pl.eye_center.x, pl.eye_center.y + FACE_BOX_DROP * pl.distance
    return Rect(cx - 0.5 * side, cy - 0.5 * side, side, side)


def simulate_detection(sample: SynthSample, rng: np.random.Generator,
                       center_jitter: float = 0.04, size_jitter: float = 0.05) -> Rect:
    """A noisy detector box around the face (jitter relative to box size)."""
    r = face_rect(sample)
    size = r.w
    cx, cy = r.center
    cx += rng.normal(0.0, center_jitter * size)
    cy += rng.normal(0.0, center_jitter * size)
    side = size * math.exp(rng.normal(0.0, size_jitter))
    return Rect(cx - 0.5 * side, cy - 0.5 * side, side, side)


# -- pixel-rule oracle -----------------------------------------------------


def _probe(img: np.ndarray, placement: Placement, p: float, q: float) -> Optional[np.ndarray]:
    x, y = to_canvas(placement, p, q)
    xi, yi = int(round(x)), int(round(y))
    if not (0 <= xi < img.shape[1] and 0 <= yi < img.shape[0]):
        return None
    return img[yi, xi]


def _near(a, b, tol: float = 0.15) -> bool:
    return a is not None and float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) < tol


def oracle_flags(img: np.ndarray, placement: Placement) -> dict:
    """Re-derive every attribute from pixels, given only the face placement.

    Probes sit well inside the shapes they test, at least two canvas pixels
    from any edge for the default distance range. Returns None for an
    attribute whose probe falls outside the canvas.
    """
    probe = lambda p, q: _probe(img, placement, p, q)  # noqa: E731
    skin = probe(0.62, 0.5)
    hair_side = [probe(s * 1.43, -0.05) for s in (-1, 1)]
    hair = next((h for h in hair_side if h is not None), None)

    def dark(v):
        return None if v is None else bool(np.max(v) < 0.3)

    flags = {
        "Eyeglasses": dark(probe(0.0, 0.0)),
        "Wearing_Hat": None if probe(0.0, -1.65) is None else _near(probe(0.0, -1.65), HAT_COLOR),
        "Mustache": dark(probe(0.0, 0.71)),
        "Mouth_Open": dark(probe(0.0, 1.08)),
        "Round_Face": None if probe(1.2, 0.3) is None else _near(probe(1.2, 0.3), skin, 0.13),
        "Dark_Hair": dark(hair),
    }
    # Earrings hang beside the jaw of either head shape; probe both positions.
    found = []
    for round_face in (False, True):
        x = head_half_width(round_face, EARRING_Y) + EARRING_GAP
        found.append(any(_near(probe(s * x, EARRING_Y), GOLD, 0.2) for s in (-1, 1)))
    flags["Wearing_Earrings"] = any(found)
    brow = [probe(s * EYE_X, -0.5) for s in (-1, 1)]
    flags["Thick_Eyebrows"] = dark(next((b for b in brow if b is not None), None))
    return flags
