"""Desk-scale synthetic benchmark.

Toy faces are rendered at random rotation, scale and position. Networks are
trained either on landmark-aligned crops or on randomly perturbed crops, then
tested on crops cut from noisy detector boxes (no landmark alignment), with
and without the test-time transformation grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .augment import Batch, EpochStream, PerturbConfig, REFERENCE_RESOLUTION, epoch_order
from .data import DatasetRecord, enlarge_detection
from .evaluation import classify, error_table, fuse_scores
from .geometry import AlignedBox, aligned_box, box_to_affine, with_alpha
from .model import ReferenceNet, TrainPlan, predict_batched, train
from .raster import warp
from .synth import SynthConfig, simulate_detection, synth_generate
from .tta import TtaGrid, grid_perturbations, render_views


@dataclass(frozen=True)
class BenchmarkConfig:
    n_train: int = 2000
    n_val: int = 300
    n_test: int = 500
    n_attributes: int = 8
    out_size: int = 32
    hidden: int = 64
    max_epochs: int = 20
    learning_rate: float = 1e-3
    patience: int = 3
    enlargement: float = 1.6
    workers: int = 1
    synth: SynthConfig = field(default_factory=SynthConfig)

    def perturb_config(self) -> PerturbConfig:
        return PerturbConfig.for_resolution(self.out_size)

    def tta_grid(self) -> TtaGrid:
        return TtaGrid().scaled_shifts(self.out_size / REFERENCE_RESOLUTION)

    def plan(self, loss: str = "sigmoid-xent") -> TrainPlan:
        return TrainPlan(loss=loss, learning_rate=self.learning_rate, patience=self.patience,
                         max_epochs=self.max_epochs)


@dataclass
class BenchmarkData:
    names: list
    train: list  # DatasetRecord with in-memory images
    val_images: dict  # "aligned" / "unrotated" -> (N, S, S, 3)
    val_labels: np.ndarray
    test_images: list  # source canvases
    test_boxes: list  # enlarged detector boxes (axis aligned)
    test_labels: np.ndarray
    test_detected: np.ndarray  # single crop per detector box


def crop_box(img: np.ndarray, box: AlignedBox, out_size: int) -> np.ndarray:
    return warp(img, box_to_affine(box, out_size, out_size), out_size, out_size)


def build(cfg: BenchmarkConfig, seed: int) -> BenchmarkData:
    """Train, validation and test splits; pure in (cfg, seed)."""
    synth = replace(cfg.synth, n_attributes=cfg.n_attributes, seed=seed)
    n_tv = cfg.n_train + cfg.n_val
    samples = synth_generate(synth, n_tv + cfg.n_test)
    train_s, val_s, test_s = samples[:cfg.n_train], samples[cfg.n_train:n_tv], samples[n_tv:]
    s = cfg.out_size

    records = [DatasetRecord(f"{i:06d}", landmarks=x.landmarks, attributes=x.attributes, image=x.image)
               for i, x in enumerate(train_s)]
    val_aligned = np.stack([crop_box(x.image, aligned_box(x.landmarks), s) for x in val_s])
    val_unrotated = np.stack([crop_box(x.image, with_alpha(aligned_box(x.landmarks), 0.0), s) for x in val_s])

    det_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(2**31,))))
    boxes = [enlarge_detection(simulate_detection(x, det_rng), cfg.enlargement) for x in test_s]
    return BenchmarkData(
        names=synth.names,
        train=records,
        val_images={"aligned": val_aligned, "unrotated": val_unrotated},
        val_labels=np.array([x.attributes for x in val_s], dtype=np.int8),
        test_images=[x.image for x in test_s],
        test_boxes=boxes,
        test_labels=np.array([x.attributes for x in test_s], dtype=np.int8),
        test_detected=np.stack([crop_box(x.image, b, s) for x, b in zip(test_s, boxes)]),
    )


class _Cached:
    """Epoch source for the aligned baseline: crops are rendered once, then
    reshuffled into new batches every epoch, exactly like a live stream."""

    def __init__(self, stream: EpochStream):
        self.stream = stream
        self.images = None

    def __call__(self, epoch: int):
        if self.images is None:
            self.images = np.stack([self.stream.render(0, i) for i in range(len(self.stream.dataset))])
            self.labels = np.array([r.attributes for r in self.stream.dataset], dtype=np.int8)
        order = epoch_order(self.stream.seed, epoch, len(self.images))
        bs = self.stream.batch_size
        for i in range(0, len(order), bs):
            idx = order[i:i + bs]
            yield Batch(self.images[idx], self.labels[idx], idx)


def train_net(data: BenchmarkData, cfg: BenchmarkConfig, seed: int, augment: bool = True,
              loss: str = "sigmoid-xent") -> ReferenceNet:
    """Train one reference net; ``augment=False`` trains on aligned crops only.

    Both variants see the same number of iterations. Augmented nets validate
    on unrotated landmark boxes, aligned nets on aligned crops.
    """
    net = ReferenceNet(len(data.names), hidden=cfg.hidden, input_size=cfg.out_size, seed=seed)
    plan = cfg.plan(loss)
    if augment:
        stream = EpochStream(data.train, cfg.perturb_config(), seed, plan.batch_size, cfg.workers)
        source, val = stream, data.val_images["unrotated"]
    else:
        stream = EpochStream(data.train, PerturbConfig.identity(cfg.out_size), seed, plan.batch_size, cfg.workers)
        source, val = _Cached(stream), data.val_images["aligned"]
    return train(net, source, plan, val, data.val_labels).model


def overall_error(scores: np.ndarray, labels: np.ndarray, names) -> float:
    return error_table(classify(scores), labels, names).overall


def single_view_scores(net, data: BenchmarkData) -> np.ndarray:
    return predict_batched(net, data.test_detected)


def grid_scores(net, data: BenchmarkData, cfg: BenchmarkConfig, grid: Optional[TtaGrid] = None) -> np.ndarray:
    """Scores fused over every grid view of every detector box."""
    perturbations = grid_perturbations(grid or cfg.tta_grid(), cfg.out_size)
    fused = []
    for img, box in zip(data.test_images, data.test_boxes):
        views = render_views(img, box, perturbations, cfg.out_size)
        fused.append(fuse_scores(net.predict(views)))
    return np.stack(fused)


def relative_improvement(baseline: float, improved: float) -> float:
    return (baseline - improved) / baseline if baseline > 0 else math.nan
