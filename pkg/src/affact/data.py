"""Dataset ingestion: CelebA-style annotation files, detector output, crops.

Attribute file::

    <image count>
    <name_1> ... <name_A>
    <id> <v_1> ... <v_A>          values in {-1, 1}

Landmark file (count and header lines optional)::

    <id> x_le y_le x_re y_re x_n y_n x_lm y_lm x_rm y_rm

"left"/"right" follow the image side: the left eye has the smaller x.

Partition file: ``<id> <0|1|2>`` for train/validation/test.
Detection file: ``<id> x y w h confidence``, several rows per id allowed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geometry import AlignedBox, Landmarks, Point, aligned_box, landmark_geometry, BOX_SIZE_PER_DISTANCE
from .raster import as_image, crop, rescale

PARTITIONS = ("train", "validation", "test")
DEFAULT_ENLARGEMENT = 1.6

CELEBA_ATTRIBUTES = (
    "5_o_Clock_Shadow Arched_Eyebrows Attractive Bags_Under_Eyes Bald Bangs Big_Lips Big_Nose "
    "Black_Hair Blond_Hair Blurry Brown_Hair Bushy_Eyebrows Chubby Double_Chin Eyeglasses Goatee "
    "Gray_Hair Heavy_Makeup High_Cheekbones Male Mouth_Slightly_Open Mustache Narrow_Eyes No_Beard "
    "Oval_Face Pale_Skin Pointy_Nose Receding_Hairline Rosy_Cheeks Sideburns Smiling Straight_Hair "
    "Wavy_Hair Wearing_Earrings Wearing_Hat Wearing_Lipstick Wearing_Necklace Wearing_Necktie Young"
).split()

LANDMARK_HEADER = ("lefteye_x lefteye_y righteye_x righteye_y nose_x nose_y "
                   "leftmouth_x leftmouth_y rightmouth_x rightmouth_y")


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def display_name(attribute: str) -> str:
    """CelebA file names use underscores where tables use spaces."""
    return attribute.replace("_", " ")


class Rect(NamedTuple):
    x: float
    y: float
    w: float
    h: float

    @property
    def center(self) -> Point:
        return Point(self.x + 0.5 * self.w, self.y + 0.5 * self.h)


class Detection(NamedTuple):
    rect: Rect
    confidence: float


@dataclass
class DatasetRecord:
    image_id: str
    path: Optional[Path] = None
    landmarks: Optional[Landmarks] = None
    detection: Optional[Rect] = None
    attributes: tuple = ()
    partition: str = "train"
    image: Optional[np.ndarray] = field(default=None, repr=False)


def _num(text: str, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(lineno, f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(lineno, f"non-finite value {text!r}")
    return v


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _lines(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            yield lineno, line.split()


# -- attributes ------------------------------------------------------------


def parse_attributes(text: str) -> tuple[list, dict]:
    rows = list(_lines(text))
    if len(rows) < 2:
        raise ParseError(len(rows) + 1, "missing count or attribute-name line")
    (ln0, first), (_, names) = rows[0], rows[1]
    if len(first) != 1 or not first[0].isdigit():
        raise ParseError(ln0, f"expected the image count, got {' '.join(first)!r}")
    count = int(first[0])
    labels: dict = {}
    for lineno, parts in rows[2:]:
        if len(parts) != len(names) + 1:
            raise ParseError(lineno, f"expected {len(names) + 1} fields, got {len(parts)}")
        values = []
        for v in parts[1:]:
            if v not in ("1", "-1", "+1"):
                raise ParseError(lineno, f"attribute value must be -1 or 1, got {v!r}")
            values.append(-1 if v == "-1" else 1)
        if parts[0] in labels:
            raise ParseError(lineno, f"duplicate image id {parts[0]!r}")
        labels[parts[0]] = tuple(values)
    if len(labels) != count:
        raise ParseError(ln0, f"header announces {count} images, file has {len(labels)}")
    return list(names), labels


def emit_attributes(names: Sequence[str], labels: dict) -> str:
    out = [str(len(labels)), " ".join(names)]
    out += [f"{i} " + " ".join(str(int(v)) for v in vals) for i, vals in labels.items()]
    return "\n".join(out) + "\n"


# -- landmarks -------------------------------------------------------------


def parse_landmarks(text: str) -> dict:
    result: dict = {}
    for lineno, parts in _lines(text):
        if len(result) == 0 and (len(parts) == 1 and parts[0].isdigit() or parts[0] == "lefteye_x"):
            continue  # optional count / header line
        if len(parts) != 11:
            raise ParseError(lineno, f"expected 11 fields (id + 10 coordinates), got {len(parts)}")
        v = [_num(p, lineno) for p in parts[1:]]
        try:
            lm = Landmarks(
                eye_right=Point(v[2], v[3]),
                eye_left=Point(v[0], v[1]),
                mouth_right=Point(v[8], v[9]),
                mouth_left=Point(v[6], v[7]),
                nose=Point(v[4], v[5]),
            )
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if parts[0] in result:
            raise ParseError(lineno, f"duplicate image id {parts[0]!r}")
        result[parts[0]] = lm
    return result


def emit_landmarks(landmarks: dict) -> str:
    out = [str(len(landmarks)), LANDMARK_HEADER]
    for i, lm in landmarks.items():
        nose = lm.nose if lm.nose is not None else Point(
            0.5 * (lm.eye_left.x + lm.eye_right.x), 0.5 * (lm.eye_left.y + lm.mouth_left.y))
        pts = [lm.eye_left, lm.eye_right, nose, lm.mouth_left, lm.mouth_right]
        out.append(f"{i} " + " ".join(_fmt_num(c) for p in pts for c in p))
    return "\n".join(out) + "\n"


# -- partitions ------------------------------------------------------------


def parse_partition(text: str) -> dict:
    result: dict = {}
    for lineno, parts in _lines(text):
        if len(parts) != 2 or parts[1] not in ("0", "1", "2"):
            raise ParseError(lineno, "expected '<id> <0|1|2>'")
        if parts[0] in result:
            raise ParseError(lineno, f"duplicate image id {parts[0]!r}")
        result[parts[0]] = PARTITIONS[int(parts[1])]
    return result


def emit_partition(partition: dict) -> str:
    return "".join(f"{i} {PARTITIONS.index(p)}\n" for i, p in partition.items())


# -- detections ------------------------------------------------------------


def parse_detections(text: str) -> dict:
    result: dict = {}
    for lineno, parts in _lines(text):
        if parts[0].startswith("#"):
            continue
        if len(parts) != 6:
            raise ParseError(lineno, f"expected 'id x y w h confidence', got {len(parts)} fields")
        x, y, w, h, conf = (_num(p, lineno) for p in parts[1:])
        if w < 0 or h < 0:
            raise ParseError(lineno, "detection width and height must be non-negative")
        result.setdefault(parts[0], []).append(Detection(Rect(x, y, w, h), conf))
    return result


def emit_detections(detections: dict) -> str:
    out = []
    for i, dets in detections.items():
        for det in dets:
            out.append(f"{i} " + " ".join(_fmt_num(v) for v in (*det.rect, det.confidence)))
    return "".join(line + "\n" for line in out)


def iou(a: Rect, b: Rect) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def box_rect(box: AlignedBox) -> Rect:
    """Axis-aligned rectangle of a box, ignoring its angle."""
    return Rect(box.x_l, box.y_t, box.width, box.height)


def select_detection(detections: Sequence[Detection], truth: Rect) -> Optional[Detection]:
    """Detection with the largest IoU against ``truth`` (first one on ties)."""
    best, best_iou = None, -1.0
    for det in detections:
        v = iou(det.rect, truth)
        if v > best_iou:
            best, best_iou = det, v
    return best


def enlarge_detection(rect: Rect, factor: float = DEFAULT_ENLARGEMENT) -> AlignedBox:
    """Square box of side ``factor * max(w, h)`` about the rectangle center."""
    if rect.w <= 0 or rect.h <= 0:
        raise ValueError(f"detection must have positive size: {rect}")
    if factor <= 0:
        raise ValueError("enlargement factor must be positive")
    cx, cy = rect.center
    half = 0.5 * factor * max(rect.w, rect.h)
    return AlignedBox(cx - half, cy - half, cx + half, cy + half, 0.0)


def calibrate_enlargement(landmarks: Sequence[Landmarks], rects: Sequence[Rect]) -> float:
    """Median factor that maps detection boxes onto the landmark box size."""
    ratios = [BOX_SIZE_PER_DISTANCE * landmark_geometry(lm)[2] / max(r.w, r.h)
              for lm, r in zip(landmarks, rects)]
    if not ratios:
        raise ValueError("no landmark/detection pairs to calibrate on")
    return float(np.median(ratios))


def fallback_crop(img: np.ndarray, out_size: int = 224) -> np.ndarray:
    """Scale the smaller side to ``out_size`` and take the center square."""
    img = as_image(img)
    h, w, _ = img.shape
    s = out_size / min(w, h)
    new_w = out_size if w <= h else int(round(w * s))
    new_h = out_size if h <= w else int(round(h * s))
    scaled = rescale(img, new_w, new_h)
    return crop(scaled, (new_w - out_size) // 2, (new_h - out_size) // 2, out_size, out_size)


# -- whole datasets --------------------------------------------------------


def load_dataset(root, attributes_file: str, landmarks_file: Optional[str] = None,
                 partition_file: Optional[str] = None, detections_file: Optional[str] = None,
                 image_dir: str = "images") -> tuple[list, list]:
    """Records for every id of the attribute file, in file order."""
    root = Path(root)
    names, labels = parse_attributes((root / attributes_file).read_text())
    landmarks = parse_landmarks((root / landmarks_file).read_text()) if landmarks_file else {}
    partition = parse_partition((root / partition_file).read_text()) if partition_file else {}
    detections = parse_detections((root / detections_file).read_text()) if detections_file else {}
    records = []
    for image_id, attrs in labels.items():
        lm = landmarks.get(image_id)
        det = None
        dets = detections.get(image_id)
        if dets:
            truth = box_rect(aligned_box(lm)) if lm is not None else None
            det = (select_detection(dets, truth) if truth is not None
                   else max(dets, key=lambda d: d.confidence)).rect
        records.append(DatasetRecord(
            image_id=image_id,
            path=root / image_dir / image_id,
            landmarks=lm,
            detection=det,
            attributes=attrs,
            partition=partition.get(image_id, "train"),
        ))
    return names, records


def check_partitions_disjoint(records: Sequence[DatasetRecord]) -> None:
    seen: dict = {}
    for r in records:
        if r.partition not in PARTITIONS:
            raise ValueError(f"{r.image_id}: unknown partition {r.partition!r}")
        if seen.setdefault(r.image_id, r.partition) != r.partition:
            raise ValueError(f"{r.image_id} appears in partitions {seen[r.image_id]} and {r.partition}")
