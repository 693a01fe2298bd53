"""Key-value run configuration shared by every CLI command.

A config file holds ``key = value`` lines; ``#`` starts a comment. Keys are
flat, with dotted prefixes grouping the perturbation (``perturb.``), test-time
grid (``grid.``), training (``train.``), synthetic data (``synth.``),
preview (``preview.``) and t-test (``ttest.``) settings. Unknown keys and
malformed values are rejected before any command runs.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from .augment import PerturbConfig
from .model import LOSSES, TrainPlan
from .tta import TtaGrid

MODES = ("A", "C", "L", "D", "CD", "T", "TD")
PAIRINGS = ("attribute", "image")


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _strings(text: str) -> tuple:
    return tuple(v for v in text.replace(",", " ").split())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "seed": (int, 0),
    "workers": (int, 1),
    "attributes": (str, "list_attr_celeba.txt"),
    "landmarks": (str, "list_landmarks_celeba.txt"),
    "detected_landmarks": (str, ""),
    "partition": (str, ""),
    "detections": (str, ""),
    "image_dir": (str, "images"),
    "split": (_choice("train", "validation", "test", "all"), "test"),
    "output": (str, "out"),
    "checkpoint": (str, "model.bin"),
    "checkpoints": (_strings, ()),
    "scores": (str, "scores.txt"),
    "mode": (_choice(*MODES), "A"),
    "out_size": (int, 224),
    "enlargement": (float, 1.6),
    "format": (_choice("csv", "tsv", "markdown"), "csv"),
    "column": (str, "error"),
    "tau": (float, 0.0),
    "perturb.std_angle": (float, 20.0),
    "perturb.std_shift": (float, 0.05),
    "perturb.mean_scale": (float, 1.0),
    "perturb.std_scale": (float, 0.1),
    "perturb.std_blur": (float, 3.0),
    "perturb.flip_prob": (float, 0.5),
    "grid.shifts": (_floats, (-10.0, 0.0, 10.0)),
    "grid.scales": (_floats, (0.9, 1.0, 1.1)),
    "grid.angles": (_floats, (-10.0, 0.0, 10.0)),
    "grid.mirror": (_bool, True),
    "train.loss": (_choice(*LOSSES), "sigmoid-xent"),
    "train.augment": (_bool, True),
    "train.learning_rate": (float, 1e-3),
    "train.decay_factor": (float, 0.1),
    "train.patience": (int, 5),
    "train.max_drops": (int, 2),
    "train.batch_size": (int, 64),
    "train.rms_decay": (float, 0.9),
    "train.epsilon": (float, 1e-8),
    "train.max_epochs": (int, 30),
    "train.eval_every": (int, 0),
    "train.hidden": (int, 64),
    "train.input_size": (int, 32),
    "synth.count": (int, 1000),
    "synth.n_attributes": (int, 8),
    "synth.canvas": (int, 112),
    "synth.rotation_range": (float, 25.0),
    "synth.translation_range": (float, 8.0),
    "synth.noise_std": (float, 0.015),
    "synth.validation_fraction": (float, 0.1),
    "synth.test_fraction": (float, 0.2),
    "preview.rows": (int, 4),
    "preview.count": (int, 5),
    "ttest.a": (str, ""),
    "ttest.b": (str, ""),
    "ttest.pairing": (_choice(*PAIRINGS), "attribute"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw ``key -> value string`` pairs; later duplicates win."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def _unknown(key: str) -> ConfigError:
    close = difflib.get_close_matches(key, SCHEMA, n=1)
    hint = f" (did you mean {close[0]!r}?)" if close else ""
    return ConfigError(f"unknown config key {key!r}{hint}")


@dataclass
class RunConfig:
    """Validated settings plus the root directory all paths are relative to."""

    root: Path = Path(".")
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    @classmethod
    def build(cls, root=".", raw: Optional[Mapping[str, str]] = None) -> "RunConfig":
        cfg = cls(Path(root))
        for key, text in (raw or {}).items():
            if key not in SCHEMA:
                raise _unknown(key)
            parser = SCHEMA[key][0]
            try:
                cfg.values[key] = parser(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        cfg.validate()
        return cfg

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise _unknown(key)
        return self.values[key]

    def path(self, key: str) -> Path:
        value = self[key]
        if not value:
            raise ConfigError(f"config key {key!r} must name a file")
        return self.root / value

    def optional_path(self, key: str) -> Optional[Path]:
        return self.root / self[key] if self[key] else None

    def validate(self) -> None:
        if self["workers"] < 1:
            raise ConfigError("workers must be >= 1")
        if self["out_size"] < 1:
            raise ConfigError("out_size must be positive")
        if self["enlargement"] <= 0:
            raise ConfigError("enlargement must be positive")
        try:
            self.perturb()
            self.grid()
            self.plan()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self["synth.count"] < 1 or self["preview.count"] < 0 or self["preview.rows"] < 1:
            raise ConfigError("synth.count and preview.rows must be >= 1, preview.count >= 0")
        fractions = self["synth.validation_fraction"] + self["synth.test_fraction"]
        if min(self["synth.validation_fraction"], self["synth.test_fraction"]) < 0 or fractions >= 1:
            raise ConfigError("synth fractions must be non-negative and sum to less than 1")

    def perturb(self) -> PerturbConfig:
        names = ("std_angle", "std_shift", "mean_scale", "std_scale", "std_blur", "flip_prob")
        size = self["out_size"]
        return PerturbConfig(**{n: self[f"perturb.{n}"] for n in names}, out_w=size, out_h=size)

    def grid(self) -> TtaGrid:
        return TtaGrid(self["grid.shifts"], self["grid.scales"], self["grid.angles"], self["grid.mirror"])

    def plan(self) -> TrainPlan:
        names = ("loss", "learning_rate", "decay_factor", "patience", "max_drops", "batch_size",
                 "rms_decay", "epsilon", "max_epochs", "eval_every")
        return TrainPlan(**{n: self[f"train.{n}"] for n in names})

    def dump(self) -> str:
        def fmt(v):
            if isinstance(v, tuple):
                return " ".join(str(x) for x in v)
            if isinstance(v, bool):
                return "true" if v else "false"
            return str(v)
        return "".join(f"{k} = {fmt(v)}\n" for k, v in self.values.items())
