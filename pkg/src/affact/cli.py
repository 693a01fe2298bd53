"""``affact`` command line: align, augment-preview, synth, train, predict,
evaluate, ttest and calibrate.

Settings come from a key-value config file (``--config``) overridden by
``--set key=value`` flags; see :mod:`affact.config` for the keys. All data
paths are relative to ``--root``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .augment import EpochStream, PerturbConfig, record_rng, render_training_example, sample_perturbation
from .config import ConfigError, RunConfig, parse_config_text
from .data import (
    DatasetRecord, Detection, ParseError, calibrate_enlargement, emit_attributes, emit_detections,
    emit_landmarks, emit_partition, enlarge_detection, fallback_crop, load_dataset, parse_detections,
    parse_landmarks,
)
from .evaluation import (
    classify, compare_tables, emit_table, error_table, fuse_scores, parse_table, per_image_errors,
    read_scores, write_scores,
)
from .geometry import AlignedBox, Perturbation, aligned_box, box_to_affine, with_alpha
from .imageio import read_image, write_image
from .model import Ensemble, ReferenceNet, load_checkpoint, save_checkpoint, train
from .raster import warp
from .stats import TTestError, paired_ttest
from .synth import SynthConfig, sample_rng, simulate_detection, synth_sample
from .tta import grid_perturbations, render_views, ten_crop_views

log = logging.getLogger("affact")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class CommandError(RuntimeError):
    """A failure reported to the user without a traceback."""


class Outcome:
    """Counts per-record problems; any error makes the exit code nonzero."""

    def __init__(self):
        self.errors = 0

    def error(self, msg: str, *args) -> None:
        self.errors += 1
        log.warning(msg, *args)

    @property
    def code(self) -> int:
        return EXIT_FAILED if self.errors else EXIT_OK


# -- shared helpers --------------------------------------------------------


def load_records(cfg: RunConfig, landmarks_key: str = "landmarks", need_landmarks: bool = True) -> tuple:
    """Attribute names and the records of the configured split."""
    root = cfg.root
    lm_file = cfg[landmarks_key] or None
    if need_landmarks and not lm_file:
        raise ConfigError(f"config key {landmarks_key!r} must name a landmark file")
    names, records = load_dataset(root, cfg["attributes"], lm_file, cfg["partition"] or None,
                                  cfg["detections"] or None, cfg["image_dir"])
    if cfg["split"] != "all":
        if not cfg["partition"] and cfg["split"] != "train":
            raise ConfigError(f"split {cfg['split']!r} needs a partition file")
        records = [r for r in records if r.partition == cfg["split"]]
    return names, records


def _read(record: DatasetRecord, outcome: Outcome) -> Optional[np.ndarray]:
    if record.image is not None:
        return record.image
    try:
        return read_image(record.path)
    except (OSError, ValueError) as exc:
        outcome.error("skipping %s: unreadable image (%s)", record.image_id, exc)
        return None


def crop_box(img: np.ndarray, box: AlignedBox, size: int) -> np.ndarray:
    return warp(img, box_to_affine(box, size, size), size, size)


def fallback_box(img: np.ndarray) -> AlignedBox:
    """The centered square that :func:`fallback_crop` keeps, as a box."""
    h, w = img.shape[:2]
    s = min(w, h)
    x, y = (w - s) / 2.0, (h - s) / 2.0
    return AlignedBox(x, y, x + s, y + s, 0.0)


def _stem(record: DatasetRecord) -> str:
    return Path(record.image_id).stem


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- align / preview -------------------------------------------------------


def cmd_align(cfg: RunConfig) -> int:
    _, records = load_records(cfg)
    out_dir = _ensure_dir(cfg.path("output"))
    size, outcome, written = cfg["out_size"], Outcome(), 0
    for r in records:
        if r.landmarks is None:
            outcome.error("skipping %s: no landmark row", r.image_id)
            continue
        img = _read(r, outcome)
        if img is None:
            continue
        write_image(out_dir / f"{_stem(r)}.png", crop_box(img, aligned_box(r.landmarks), size))
        written += 1
    print(f"aligned {written} of {len(records)} image(s) into {out_dir}")
    return outcome.code


def contact_sheet(tiles: Sequence[Sequence[np.ndarray]], gap: int = 2) -> np.ndarray:
    rows, cols = len(tiles), max(len(t) for t in tiles)
    h, w, c = tiles[0][0].shape
    sheet = np.ones((rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, c))
    for i, row in enumerate(tiles):
        for j, tile in enumerate(row):
            y, x = i * (h + gap), j * (w + gap)
            sheet[y:y + h, x:x + w] = tile
    return sheet


def cmd_augment_preview(cfg: RunConfig) -> int:
    """Aligned crop in the first column, then ``preview.count`` random perturbations."""
    _, records = load_records(cfg)
    pcfg, size, outcome = cfg.perturb(), cfg["out_size"], Outcome()
    tiles = []
    for index, r in enumerate(records):
        if len(tiles) == cfg["preview.rows"]:
            break
        if r.landmarks is None:
            outcome.error("skipping %s: no landmark row", r.image_id)
            continue
        img = _read(r, outcome)
        if img is None:
            continue
        row = [render_training_example(img, r.landmarks, Perturbation.identity(), pcfg)]
        for k in range(cfg["preview.count"]):
            p = sample_perturbation(pcfg, record_rng(cfg["seed"], k, index))
            row.append(render_training_example(img, r.landmarks, p, pcfg))
        tiles.append(row)
    if not tiles:
        raise CommandError("no record could be rendered")
    out = _ensure_dir(cfg.path("output")) / "preview.png"
    write_image(out, contact_sheet(tiles))
    print(f"wrote {len(tiles)}x{len(tiles[0])} preview sheet of {size}px crops to {out}")
    return outcome.code


# -- synthetic data --------------------------------------------------------

SYNTH_FILES = {
    "attributes": "list_attr_celeba.txt",
    "landmarks": "list_landmarks_celeba.txt",
    "partition": "list_eval_partition.txt",
    "detections": "detections.txt",
}


def cmd_synth(cfg: RunConfig) -> int:
    """Toy-face dataset in CelebA layout plus simulated detector boxes."""
    n = cfg["synth.count"]
    scfg = SynthConfig(n_attributes=cfg["synth.n_attributes"], canvas=cfg["synth.canvas"],
                       rotation_range=cfg["synth.rotation_range"],
                       translation_range=cfg["synth.translation_range"],
                       noise_std=cfg["synth.noise_std"], seed=cfg["seed"])
    out = _ensure_dir(cfg.path("output"))
    img_dir = _ensure_dir(out / "images")
    n_test = int(round(n * cfg["synth.test_fraction"]))
    n_val = int(round(n * cfg["synth.validation_fraction"]))
    n_train = n - n_val - n_test
    labels, landmarks, partition, detections = {}, {}, {}, {}
    det_rng = sample_rng(cfg["seed"], 2**31)
    for i in range(n):
        s = synth_sample(scfg, i)
        image_id = f"{i:06d}.png"
        write_image(img_dir / image_id, s.image)
        labels[image_id] = s.attributes
        landmarks[image_id] = s.landmarks
        partition[image_id] = "train" if i < n_train else "validation" if i < n_train + n_val else "test"
        detections[image_id] = [Detection(simulate_detection(s, det_rng), 1.0)]
    (out / SYNTH_FILES["attributes"]).write_text(emit_attributes(scfg.names, labels))
    (out / SYNTH_FILES["landmarks"]).write_text(emit_landmarks(landmarks))
    (out / SYNTH_FILES["partition"]).write_text(emit_partition(partition))
    (out / SYNTH_FILES["detections"]).write_text(emit_detections(detections))
    run_cfg = "".join(f"{k} = {v}\n" for k, v in SYNTH_FILES.items())
    (out / "run.cfg").write_text(run_cfg)
    print(f"wrote {n} synthetic faces ({n_train} train, {n_val} validation, {n_test} test) to {out}")
    return EXIT_OK


# -- training --------------------------------------------------------------


def _load_images(records, outcome: Outcome) -> list:
    kept = []
    for r in records:
        if r.landmarks is None:
            outcome.error("skipping %s: no landmark row", r.image_id)
            continue
        img = _read(r, outcome)
        if img is not None:
            kept.append(replace(r, image=img))
    return kept


def cmd_train(cfg: RunConfig) -> int:
    outcome = Outcome()
    names, train_records = load_records(replace_split(cfg, "train"))
    _, val_records = load_records(replace_split(cfg, "validation"))
    train_records = _load_images(train_records, outcome)
    val_records = _load_images(val_records, outcome)
    if not train_records or not val_records:
        raise CommandError("training needs readable train and validation records with landmarks")
    size, augment = cfg["out_size"], cfg["train.augment"]
    pcfg = cfg.perturb() if augment else PerturbConfig.identity(size)

    def val_box(r):
        box = aligned_box(r.landmarks)
        return with_alpha(box, 0.0) if augment else box

    val_images = np.stack([crop_box(r.image, val_box(r), size) for r in val_records])
    val_labels = np.array([r.attributes for r in val_records], dtype=np.int8)
    plan = cfg.plan()
    stream = EpochStream(train_records, pcfg, cfg["seed"], plan.batch_size, cfg["workers"])
    net = ReferenceNet(len(names), cfg["train.hidden"], cfg["train.input_size"], seed=cfg["seed"])
    result = train(net, stream, plan, val_images, val_labels)
    ckpt = cfg.path("checkpoint")
    _ensure_dir(ckpt.parent)
    save_checkpoint(result.model, ckpt, plan, extra={"attributes": names, "augment": augment,
                                                     "seed": cfg["seed"], "out_size": size})
    curve = Path(str(ckpt) + ".curve.csv")
    curve.write_text(result.curve_csv())
    print(f"trained on {len(train_records)} images; best validation loss {result.best_val_loss:.6f} "
          f"after {result.drops} learning-rate drop(s); checkpoint {ckpt}, curve {curve}")
    return outcome.code


def replace_split(cfg: RunConfig, split: str) -> RunConfig:
    values = dict(cfg.values)
    values["split"] = split
    return RunConfig(cfg.root, values)


# -- prediction ------------------------------------------------------------


def _models(cfg: RunConfig):
    paths = [cfg.root / p for p in cfg["checkpoints"]] or [cfg.path("checkpoint")]
    models = [load_checkpoint(p) for p in paths]
    return models[0] if len(models) == 1 else Ensemble(models, cfg["workers"])


def _check_mode(cfg: RunConfig) -> None:
    mode = cfg["mode"]
    if mode in ("A", "C") and not cfg["landmarks"]:
        raise ConfigError(f"mode {mode} aligns with landmarks but no 'landmarks' file is configured")
    if mode == "L" and not cfg["detected_landmarks"]:
        raise ConfigError("mode L needs a 'detected_landmarks' file")
    if mode in ("D", "CD", "T", "TD") and not cfg["detections"]:
        raise ConfigError(f"mode {mode} works on detector boxes but no 'detections' file is configured")


def views_for(cfg: RunConfig, record: DatasetRecord, img: np.ndarray, outcome: Outcome) -> Optional[np.ndarray]:
    """The test views of one record for the configured mode; None skips it."""
    mode, size = cfg["mode"], cfg["out_size"]
    if mode in ("A", "C", "L"):
        if record.landmarks is None:
            outcome.error("skipping %s: no landmark row", record.image_id)
            return None
        base = crop_box(img, aligned_box(record.landmarks), size)
        return np.stack(ten_crop_views(base) if mode == "C" else [base])
    if record.detection is None:
        log.warning("%s: no detection, using the center-crop fallback", record.image_id)
        if mode in ("T", "TD"):
            return render_views(img, fallback_box(img), grid_perturbations(cfg.grid(), size), size)
        base = fallback_crop(img, size)
    else:
        box = enlarge_detection(record.detection, cfg["enlargement"])
        if mode in ("T", "TD"):
            return render_views(img, box, grid_perturbations(cfg.grid(), size), size)
        base = crop_box(img, box, size)
    return np.stack(ten_crop_views(base) if mode == "CD" else [base])


def cmd_predict(cfg: RunConfig) -> int:
    _check_mode(cfg)
    key = "detected_landmarks" if cfg["mode"] == "L" else "landmarks"
    need = cfg["mode"] in ("A", "C", "L")
    names, records = load_records(cfg, key, need_landmarks=need)
    model = _models(cfg)
    if model.n_attributes != len(names):
        raise CommandError(f"model predicts {model.n_attributes} attributes, dataset has {len(names)}")
    outcome, ids, scores = Outcome(), [], []
    for r in records:
        img = _read(r, outcome)
        if img is None:
            continue
        views = views_for(cfg, r, img, outcome)
        if views is None:
            continue
        ids.append(r.image_id)
        scores.append(fuse_scores(model.predict(views)))
    out = cfg.path("scores")
    _ensure_dir(out.parent)
    out.write_text(write_scores(ids, np.array(scores).reshape(len(ids), len(names))))
    print(f"mode {cfg['mode']}: scored {len(ids)} of {len(records)} image(s) into {out}")
    return outcome.code


# -- evaluation ------------------------------------------------------------


def _truth_for(cfg: RunConfig, ids: Sequence[str]) -> tuple:
    names, records = load_dataset(cfg.root, cfg["attributes"])
    labels = {r.image_id: r.attributes for r in records}
    missing = [i for i in ids if i not in labels]
    if missing:
        raise CommandError(f"{len(missing)} scored image(s) have no attribute row, e.g. {missing[0]!r}")
    return names, np.array([labels[i] for i in ids], dtype=np.int8)


def _score_table(cfg: RunConfig, path: Path):
    ids, scores = read_scores(path.read_text())
    if not ids:
        raise CommandError(f"{path}: no scores")
    names, truth = _truth_for(cfg, ids)
    if scores.shape[1] != len(names):
        raise CommandError(f"{path}: {scores.shape[1]} scores per image, {len(names)} attributes")
    predictions = classify(scores, cfg["tau"])
    return error_table(predictions, truth, names), predictions, truth


def cmd_evaluate(cfg: RunConfig) -> int:
    table, _, _ = _score_table(cfg, cfg.path("scores"))
    sys.stdout.write(emit_table(table, cfg["format"], cfg["column"]))
    return EXIT_OK


def _is_table(path: Path) -> bool:
    first = path.read_text().lstrip().split("\n", 1)[0]
    return first.startswith(("attribute", "| attribute"))


def _table_format(path: Path) -> str:
    return {".tsv": "tsv", ".md": "markdown"}.get(path.suffix, "csv")


def cmd_ttest(cfg: RunConfig) -> int:
    a, b = cfg.path("ttest.a"), cfg.path("ttest.b")
    if cfg["ttest.pairing"] == "image":
        if _is_table(a) or _is_table(b):
            raise ConfigError("per-image pairing needs two score dumps, not error tables")
        _, pa, ta = _score_table(cfg, a)
        _, pb, tb = _score_table(cfg, b)
        if pa.shape != pb.shape or not np.array_equal(ta, tb):
            raise CommandError("score dumps do not cover the same images in the same order")
        result = paired_ttest(per_image_errors(pa, ta), per_image_errors(pb, tb))
    else:
        tables = [parse_table(p.read_text(), _table_format(p)) if _is_table(p) else _score_table(cfg, p)[0]
                  for p in (a, b)]
        result = compare_tables(*tables)
    print(f"t = {result.t:.6f}  p = {result.p:.6g}  df = {result.df}")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    """Median detection enlargement that matches the landmark box size."""
    landmarks = parse_landmarks(cfg.path("landmarks").read_text())
    detections = parse_detections(cfg.path("detections").read_text())
    pairs = [(landmarks[i], max(d, key=lambda x: x.confidence).rect)
             for i, d in detections.items() if i in landmarks and d]
    factor = calibrate_enlargement([p[0] for p in pairs], [p[1] for p in pairs])
    print(f"enlargement = {factor:.4f}  # median over {len(pairs)} image(s)")
    return EXIT_OK


COMMANDS = {
    "align": (cmd_align, "write landmark-aligned crops as PNG"),
    "augment-preview": (cmd_augment_preview, "contact sheet of aligned and randomly perturbed crops"),
    "synth": (cmd_synth, "generate a synthetic toy-face dataset"),
    "train": (cmd_train, "train a reference network; writes checkpoint and loss curve"),
    "predict": (cmd_predict, "write score dumps for one test mode (A, C, L, D, CD, T, TD)"),
    "evaluate": (cmd_evaluate, "per-attribute error table from a score dump"),
    "ttest": (cmd_ttest, "paired t-test between two error tables or score dumps"),
    "calibrate": (cmd_calibrate, "estimate the detection enlargement factor"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affact", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--root", default=".", help="directory all configured paths are relative to")
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--seed", type=int, help="random seed (overrides the config)")
    parser.add_argument("--workers", type=int, help="worker threads (overrides the config)")
    parser.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, help=help_text)
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    raw = {}
    if args.config:
        path = Path(args.config)
        try:
            raw.update(parse_config_text(path.read_text(), str(path)))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if args.workers is not None:
        raw["workers"] = str(args.workers)
    return RunConfig.build(args.root, raw)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TTestError as exc:
        print(f"t-test error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (CommandError, ParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
