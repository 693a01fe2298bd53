"""Closed-form alignment geometry.

Landmarks are turned into a rotated crop box, boxes are perturbed, and a box
is finally expressed as an affine map from OUTPUT pixel coordinates to SOURCE
pixel coordinates (inverse-warp convention).

Conventions: pixel centers sit on integer coordinates, the origin is the
top-left corner and y grows downward. Angles are stored in degrees. A positive
angle means the right eye (the one with the larger x) is lower than the left
eye in image coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

# Box proportions relative to the eye center, in units of the box size.
BOX_SIZE_PER_DISTANCE = 5.5
EYE_TO_TOP = 0.45
EYE_TO_BOTTOM = 0.55


class DegenerateLandmarksError(ValueError):
    """Eye center and mouth center coincide, so no box size can be derived."""


class DegenerateBoxError(ValueError):
    """A box with zero (or negative) extent was given."""


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Landmarks:
    eye_right: Point
    eye_left: Point
    mouth_right: Point
    mouth_left: Point
    nose: Optional[Point] = None

    def __post_init__(self):
        for name in ("eye_right", "eye_left", "mouth_right", "mouth_left", "nose"):
            p = getattr(self, name)
            if p is None:
                continue
            if not isinstance(p, Point):
                p = Point(float(p[0]), float(p[1]))
                object.__setattr__(self, name, p)
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ValueError(f"landmark {name} is not finite: {p}")

    def translated(self, dx: float, dy: float) -> "Landmarks":
        return self.map(lambda p: Point(p.x + dx, p.y + dy))

    def map(self, fn) -> "Landmarks":
        """Apply ``fn(Point) -> Point`` to every key-point."""
        return Landmarks(
            fn(self.eye_right),
            fn(self.eye_left),
            fn(self.mouth_right),
            fn(self.mouth_left),
            None if self.nose is None else fn(self.nose),
        )

    def as_array(self) -> np.ndarray:
        """(4, 2) array ordered eye_right, eye_left, mouth_right, mouth_left."""
        return np.array([self.eye_right, self.eye_left, self.mouth_right, self.mouth_left], dtype=float)


@dataclass(frozen=True)
class AlignedBox:
    x_l: float
    y_t: float
    x_r: float
    y_b: float
    alpha: float = 0.0

    @property
    def width(self) -> float:
        return self.x_r - self.x_l

    @property
    def height(self) -> float:
        return self.y_b - self.y_t

    @property
    def center(self) -> Point:
        return Point(0.5 * (self.x_l + self.x_r), 0.5 * (self.y_t + self.y_b))

    def is_valid(self) -> bool:
        return self.width > 0 and self.height > 0


@dataclass(frozen=True)
class Perturbation:
    """One draw of the random alignment offsets.

    ``r_x`` and ``r_y`` are fractions of the box width, ``r_alpha`` is in
    degrees, ``r_s`` multiplies the output scale and ``sigma`` is the blur in
    output pixels.
    """

    r_alpha: float = 0.0
    r_x: float = 0.0
    r_y: float = 0.0
    r_s: float = 1.0
    sigma: float = 0.0
    flip: bool = False

    def __post_init__(self):
        if not self.r_s > 0:
            raise ValueError(f"scale factor must be positive, got {self.r_s}")
        if not self.sigma >= 0:
            raise ValueError(f"blur sigma must be non-negative, got {self.sigma}")

    @classmethod
    def identity(cls) -> "Perturbation":
        return cls()

    def is_identity(self) -> bool:
        return self == Perturbation()


@dataclass(frozen=True)
class AffineTransform:
    """x' = a*x + b*y + c, y' = d*x + e*y + f."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    e: float = 1.0
    f: float = 0.0

    def __post_init__(self):
        if self.a * self.e - self.b * self.d == 0:
            raise ValueError("affine transform has a singular linear part")

    @classmethod
    def from_matrix(cls, m) -> "AffineTransform":
        m = np.asarray(m, dtype=float)
        return cls(*(float(v) for v in m[:2, :3].ravel()))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(1.0, 0.0, tx, 0.0, 1.0, ty)

    @classmethod
    def rotation(cls, degrees: float, center: Point = Point(0.0, 0.0)) -> "AffineTransform":
        r = math.radians(degrees)
        cs, sn = math.cos(r), math.sin(r)
        cx, cy = center
        return cls(cs, -sn, cx - cs * cx + sn * cy, sn, cs, cy - sn * cx - cs * cy)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b, self.c], [self.d, self.e, self.f], [0.0, 0.0, 1.0]])

    @property
    def determinant(self) -> float:
        return self.a * self.e - self.b * self.d

    def __call__(self, p) -> Point:
        return apply_affine(self, p)

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """Return ``self ∘ other`` (``other`` is applied first)."""
        return AffineTransform(
            self.a * other.a + self.b * other.d,
            self.a * other.b + self.b * other.e,
            self.a * other.c + self.b * other.f + self.c,
            self.d * other.a + self.e * other.d,
            self.d * other.b + self.e * other.e,
            self.d * other.c + self.e * other.f + self.f,
        )

    def inverse(self) -> "AffineTransform":
        det = self.determinant
        ia, ib = self.e / det, -self.b / det
        id_, ie = -self.d / det, self.a / det
        return AffineTransform(ia, ib, -(ia * self.c + ib * self.f), id_, ie, -(id_ * self.c + ie * self.f))


def apply_affine(t: AffineTransform, p) -> Point:
    x, y = p
    return Point(t.a * x + t.b * y + t.c, t.d * x + t.e * y + t.f)


def landmark_geometry(lm: Landmarks) -> tuple[Point, Point, float]:
    """Eye center, mouth center and their distance."""
    t_e = Point(0.5 * (lm.eye_right.x + lm.eye_left.x), 0.5 * (lm.eye_right.y + lm.eye_left.y))
    t_m = Point(0.5 * (lm.mouth_right.x + lm.mouth_left.x), 0.5 * (lm.mouth_right.y + lm.mouth_left.y))
    d = math.hypot(t_e.x - t_m.x, t_e.y - t_m.y)
    if not d > 0:
        raise DegenerateLandmarksError("eye center and mouth center coincide (d = 0)")
    return t_e, t_m, d


def eye_angle(lm: Landmarks) -> float:
    """Angle of the eye line in degrees, in (-90, 90].

    A vertical eye pair gives +-90 by the sign of dy; coincident eyes give 0.
    """
    dx = lm.eye_right.x - lm.eye_left.x
    dy = lm.eye_right.y - lm.eye_left.y
    if dx == 0:
        return math.copysign(90.0, dy) if dy != 0 else 0.0
    return math.degrees(math.atan(dy / dx))


def aligned_box(lm: Landmarks) -> AlignedBox:
    t_e, _, d = landmark_geometry(lm)
    size = BOX_SIZE_PER_DISTANCE * d
    return AlignedBox(
        x_l=t_e.x - 0.5 * size,
        y_t=t_e.y - EYE_TO_TOP * size,
        x_r=t_e.x + 0.5 * size,
        y_b=t_e.y + EYE_TO_BOTTOM * size,
        alpha=eye_angle(lm),
    )


def perturb_box(box: AlignedBox, p: Perturbation, out_size: float) -> tuple[AlignedBox, float]:
    """Shift and rotate ``box``; return it with the perturbed output scale.

    Both vertical coordinates are shifted by ``r_y * width`` (not height).
    """
    w = box.width
    if not w > 0:
        raise DegenerateBoxError(f"box has non-positive width: {box}")
    moved = AlignedBox(
        x_l=box.x_l + p.r_x * w,
        y_t=box.y_t + p.r_y * w,
        x_r=box.x_r + p.r_x * w,
        y_b=box.y_b + p.r_y * w,
        alpha=box.alpha + p.r_alpha,
    )
    return moved, (out_size / w) * p.r_s


def flip_transform(out_w: int) -> AffineTransform:
    """Mirror output columns: u -> out_w - 1 - u."""
    return AffineTransform(-1.0, 0.0, out_w - 1.0, 0.0, 1.0, 0.0)


def box_to_affine(
    box: AlignedBox,
    out_w: int,
    out_h: int,
    flip: bool = False,
    scale: Optional[float] = None,
) -> AffineTransform:
    """Output-to-source map for cropping ``box`` into an ``out_w`` x ``out_h`` image.

    Output pixel (u, v) is offset from the output center (out_w/2, out_h/2),
    scaled to source pixels, rotated by +alpha and placed at the box center.
    By default the box is stretched to fill the output; ``scale`` (output
    pixels per source pixel, as returned by :func:`perturb_box`) overrides
    this with a uniform zoom about the box center.
    """
    if not box.is_valid():
        raise DegenerateBoxError(f"box has zero area: {box}")
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output size must be positive")
    if scale is None:
        sx, sy = box.width / out_w, box.height / out_h
    else:
        if not scale > 0:
            raise ValueError(f"scale must be positive, got {scale}")
        sx = sy = 1.0 / scale
    r = math.radians(box.alpha)
    cs, sn = math.cos(r), math.sin(r)
    cx, cy = box.center
    hw, hh = 0.5 * out_w, 0.5 * out_h
    t = AffineTransform(
        cs * sx, -sn * sy, cx - cs * sx * hw + sn * sy * hh,
        sn * sx, cs * sy, cy - sn * sx * hw - cs * sy * hh,
    )
    if flip:
        t = t.compose(flip_transform(out_w))
    return t


def source_to_output(box: AlignedBox, out_w: int, out_h: int, flip: bool = False,
                     scale: Optional[float] = None) -> AffineTransform:
    """Forward map (source pixel -> output pixel) of :func:`box_to_affine`."""
    return box_to_affine(box, out_w, out_h, flip=flip, scale=scale).inverse()


def box_corners(box: AlignedBox) -> np.ndarray:
    """Corners of the rotated box in source pixels, clockwise from top-left."""
    cx, cy = box.center
    hw, hh = 0.5 * box.width, 0.5 * box.height
    rot = AffineTransform.rotation(box.alpha, Point(cx, cy))
    pts = [(cx - hw, cy - hh), (cx + hw, cy - hh), (cx + hw, cy + hh), (cx - hw, cy + hh)]
    return np.array([rot(p) for p in pts])


def with_alpha(box: AlignedBox, alpha: float) -> AlignedBox:
    return replace(box, alpha=alpha)
