"""Test-time views: the classic ten crops and the shift/scale/angle/mirror grid."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import AlignedBox, Perturbation, box_to_affine, perturb_box
from .raster import as_image, crop, hflip, rescale, warp_many

TEN_CROP_RESCALE = 256
TEN_CROP_SIZE = 224


@dataclass(frozen=True)
class TtaGrid:
    """Test-time transformation grid.

    Shifts are in output pixels and get normalized by the output size before
    they are applied as fractions of the box width.
    """

    shifts: tuple = (-10.0, 0.0, 10.0)
    scales: tuple = (0.9, 1.0, 1.1)
    angles: tuple = (-10.0, 0.0, 10.0)
    mirror: bool = True

    def __post_init__(self):
        for name in ("shifts", "scales", "angles"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"grid {name} must not be empty")
            object.__setattr__(self, name, values)
        if any(s <= 0 for s in self.scales):
            raise ValueError("grid scales must be positive")

    def __len__(self) -> int:
        return len(self.shifts) ** 2 * len(self.scales) * len(self.angles) * (2 if self.mirror else 1)

    def scaled_shifts(self, factor: float) -> "TtaGrid":
        """Same grid with pixel shifts multiplied by ``factor`` (for other resolutions)."""
        return TtaGrid(tuple(s * factor for s in self.shifts), self.scales, self.angles, self.mirror)


def ten_crop_views(img: np.ndarray, rescale_to: Optional[int] = None) -> list[np.ndarray]:
    """Four corner crops and the center crop of the rescaled image, then their mirrors.

    Order: TL, TR, BL, BR, C, followed by the flipped views in the same order.
    The crop size equals the input size; the rescale target defaults to 256
    for 224 inputs and to the same 256/224 ratio otherwise.
    """
    img = as_image(img)
    h, w, _ = img.shape
    if rescale_to is None:
        rescale_to = TEN_CROP_RESCALE if (w, h) == (TEN_CROP_SIZE, TEN_CROP_SIZE) else None
    big_w = rescale_to or int(round(w * TEN_CROP_RESCALE / TEN_CROP_SIZE))
    big_h = rescale_to or int(round(h * TEN_CROP_RESCALE / TEN_CROP_SIZE))
    big = rescale(img, big_w, big_h)
    dx, dy = big_w - w, big_h - h
    corners = [(0, 0), (dx, 0), (0, dy), (dx, dy), (dx // 2, dy // 2)]
    views = [crop(big, x, y, w, h) for x, y in corners]
    return views + [hflip(v) for v in views]


def grid_perturbations(grid: TtaGrid, out_size: int) -> list[Perturbation]:
    """All grid combinations, shift_x outermost and mirror innermost; no blur."""
    mirrors = (False, True) if grid.mirror else (False,)
    return [
        Perturbation(r_alpha=a, r_x=sx / out_size, r_y=sy / out_size, r_s=s, sigma=0.0, flip=m)
        for sx, sy, s, a, m in itertools.product(grid.shifts, grid.shifts, grid.scales, grid.angles, mirrors)
    ]


def render_views(img: np.ndarray, box: AlignedBox, perturbations: Sequence[Perturbation],
                 out_size: int = TEN_CROP_SIZE) -> np.ndarray:
    """One crop of ``box`` per perturbation; returns (N, out_size, out_size, C)."""
    transforms = []
    for p in perturbations:
        moved, scale = perturb_box(box, p, out_size)
        transforms.append(box_to_affine(moved, out_size, out_size, flip=p.flip, scale=scale))
    return warp_many(img, transforms, out_size, out_size)
