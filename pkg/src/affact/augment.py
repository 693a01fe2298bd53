"""Random alignment perturbations and the streaming training-data layer.

Every record's perturbation is drawn from a generator keyed by
(seed, epoch, record index), so a stream is reproducible bit for bit no matter
how many worker threads render it.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .geometry import Landmarks, Perturbation, aligned_box, box_to_affine, perturb_box
from .raster import gaussian_blur, warp

log = logging.getLogger(__name__)

REFERENCE_RESOLUTION = 224
MIN_SCALE = 0.1
DEFAULT_BATCH_SIZE = 64


@dataclass(frozen=True)
class PerturbConfig:
    std_angle: float = 20.0
    std_shift: float = 0.05
    mean_scale: float = 1.0
    std_scale: float = 0.1
    std_blur: float = 3.0
    flip_prob: float = 0.5
    out_w: int = 224
    out_h: int = 224

    def __post_init__(self):
        for name in ("std_angle", "std_shift", "std_scale", "std_blur"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.mean_scale <= 0:
            raise ValueError("mean_scale must be positive")
        if self.out_w <= 0 or self.out_h <= 0:
            raise ValueError("output size must be positive")

    @classmethod
    def identity(cls, out_w: int = 224, out_h: Optional[int] = None) -> "PerturbConfig":
        """Degenerate distributions: every draw is the identity perturbation."""
        return cls(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, out_w, out_w if out_h is None else out_h)

    @classmethod
    def for_resolution(cls, out_size: int, **overrides) -> "PerturbConfig":
        """Default distributions with the blur rescaled from 224 px to ``out_size``."""
        base = cls(out_w=out_size, out_h=out_size,
                   std_blur=cls.std_blur * out_size / REFERENCE_RESOLUTION)
        return replace(base, **overrides)


def record_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Counter-based generator for one record of one epoch."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(epoch), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(epoch),))
    return np.random.Generator(np.random.Philox(ss)).permutation(n)


def sample_perturbation(cfg: PerturbConfig, rng: np.random.Generator) -> Perturbation:
    # Draw order is part of the reproducibility contract; do not reorder.
    r_alpha = rng.normal(0.0, cfg.std_angle)
    r_x = rng.normal(0.0, cfg.std_shift)
    r_y = rng.normal(0.0, cfg.std_shift)
    r_s = max(rng.normal(cfg.mean_scale, cfg.std_scale), MIN_SCALE)
    sigma = abs(rng.normal(0.0, cfg.std_blur))
    flip = bool(rng.random() < cfg.flip_prob)
    return Perturbation(float(r_alpha), float(r_x), float(r_y), float(r_s), float(sigma), flip)


def render_training_example(img: np.ndarray, lm: Landmarks, p: Perturbation, cfg: PerturbConfig) -> np.ndarray:
    box, scale = perturb_box(aligned_box(lm), p, cfg.out_w)
    t = box_to_affine(box, cfg.out_w, cfg.out_h, flip=p.flip, scale=scale)
    out = warp(img, t, cfg.out_w, cfg.out_h)
    if p.sigma > 0:
        out = gaussian_blur(out, p.sigma)
    return out


class Batch(NamedTuple):
    images: np.ndarray  # (B, H, W, C)
    labels: np.ndarray  # (B, A) in {-1, +1}
    indices: np.ndarray  # dataset indices of the rows


def default_loader(record) -> np.ndarray:
    image = getattr(record, "image", None)
    if image is not None:
        return image
    from .imageio import read_image

    return read_image(record.path)


class EpochStream:
    """Ordered batches of freshly perturbed training examples.

    ``dataset`` is a sequence of records with ``landmarks`` and ``attributes``
    fields plus either an in-memory ``image`` or an image ``path``. Records
    whose image cannot be read are skipped with a warning; their ids are kept
    in ``skipped[epoch]``.
    """

    def __init__(
        self,
        dataset: Sequence,
        cfg: PerturbConfig,
        seed: int,
        batch_size: int = DEFAULT_BATCH_SIZE,
        workers: int = 1,
        prefetch: int = 2,
        shuffle: bool = True,
        loader: Callable = default_loader,
    ):
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        self.dataset = dataset
        self.cfg = cfg
        self.seed = int(seed)
        self.batch_size = batch_size
        self.workers = max(1, int(workers))
        self.prefetch = max(1, int(prefetch))
        self.shuffle = shuffle
        self.loader = loader
        self.skipped: dict[int, list] = {}

    def __len__(self) -> int:
        return -(-len(self.dataset) // self.batch_size)

    def render(self, epoch: int, index: int) -> Optional[np.ndarray]:
        record = self.dataset[index]
        try:
            img = self.loader(record)
        except (OSError, ValueError) as exc:
            log.warning("skipping record %s: %s", getattr(record, "image_id", index), exc)
            return None
        p = sample_perturbation(self.cfg, record_rng(self.seed, epoch, index))
        return render_training_example(img, record.landmarks, p, self.cfg)

    def _assemble(self, epoch: int, indices, images) -> Optional[Batch]:
        keep = [i for i, im in zip(indices, images) if im is not None]
        for i, im in zip(indices, images):
            if im is None:
                self.skipped[epoch].append(getattr(self.dataset[i], "image_id", int(i)))
        if not keep:
            return None
        labels = np.array([self.dataset[i].attributes for i in keep], dtype=np.int8)
        return Batch(np.stack([im for im in images if im is not None]), labels, np.array(keep))

    def epoch(self, epoch: int) -> Iterator[Batch]:
        self.skipped[epoch] = []
        n = len(self.dataset)
        order = epoch_order(self.seed, epoch, n) if self.shuffle else np.arange(n)
        chunks = [order[i:i + self.batch_size] for i in range(0, n, self.batch_size)]
        if self.workers == 1:
            for chunk in chunks:
                batch = self._assemble(epoch, chunk, [self.render(epoch, int(i)) for i in chunk])
                if batch is not None:
                    yield batch
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                pending: deque = deque()
                todo = iter(chunks)
                while True:
                    # Bounded look-ahead: at most `prefetch` batches in flight.
                    while len(pending) < self.prefetch:
                        chunk = next(todo, None)
                        if chunk is None:
                            break
                        pending.append((chunk, [pool.submit(self.render, epoch, int(i)) for i in chunk]))
                    if not pending:
                        break
                    chunk, futures = pending.popleft()
                    batch = self._assemble(epoch, chunk, [f.result() for f in futures])
                    if batch is not None:
                        yield batch
        if self.skipped[epoch]:
            log.warning("epoch %d: skipped %d unreadable record(s)", epoch, len(self.skipped[epoch]))

    def __call__(self, epoch: int) -> Iterator[Batch]:
        return self.epoch(epoch)


def epoch_stream(dataset, cfg: PerturbConfig, seed: int, epoch: int = 0,
                 batch_size: int = DEFAULT_BATCH_SIZE, workers: int = 1) -> Iterator[Batch]:
    """Batches of one epoch; see :class:`EpochStream`."""
    return EpochStream(dataset, cfg, seed, batch_size=batch_size, workers=workers).epoch(epoch)
