"""Alignment-free facial attribute classification toolkit.

Landmark alignment geometry, random perturbation of training crops, test-time
transformation grids, score fusion and per-attribute evaluation, with a small
reference network and a synthetic toy-face benchmark.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    AffineTransform, AlignedBox, DegenerateBoxError, DegenerateLandmarksError, Landmarks, Perturbation,
    Point, aligned_box, apply_affine, box_to_affine, landmark_geometry, perturb_box,
)
from .raster import crop, gaussian_blur, hflip, rescale, warp  # noqa: E402
from .augment import EpochStream, PerturbConfig, epoch_stream, render_training_example, sample_perturbation  # noqa: E402
from .tta import TtaGrid, grid_perturbations, render_views, ten_crop_views  # noqa: E402
from .model import (  # noqa: E402
    Ensemble, ReferenceNet, TrainPlan, ensemble_scores, euclidean_loss, sigmoid_xent_loss, train,
)
from .evaluation import ErrorTable, classify, emit_table, error_table, fuse_scores  # noqa: E402
from .stats import paired_ttest  # noqa: E402
from .data import (  # noqa: E402
    DatasetRecord, enlarge_detection, fallback_crop, parse_attributes, parse_detections, parse_landmarks,
)
from .synth import SynthConfig, synth_generate  # noqa: E402
