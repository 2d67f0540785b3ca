"""Experiment configuration: INI-style key = value sections, validated
against a complete schema.  Unknown sections or keys are errors so typos in
hyperparameter names cannot pass silently.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .imageproc import CropBox
from .patchgen import GridSpec

TASKS = ("gender", "age", "age_given_gender")
METHODS = ("nine_patch", "edge_patch", "rows", "whole_image", "combination", "cascade")


@dataclass
class EdgeSpec:
    detector: str = "sobel"
    blur_size: int = 9
    blur_sigma: float = 2.0
    threshold: float = 0.2
    canny_low: float = 0.1
    canny_high: float = 0.2
    patch_side: int = 13

    def __post_init__(self):
        if self.detector not in ("sobel", "canny"):
            raise ConfigError(f"edge detector must be sobel or canny, got {self.detector!r}")


@dataclass
class RowSpec:
    n_rows: int = 5
    row_h: int = 20


@dataclass
class BalanceSpec:
    enabled: bool = False
    majority: str = "m"
    keep_fraction: float = 1.0 / 3.0


@dataclass
class MlpSettings:
    """Schedule and architecture knobs; layer dims are derived per method."""

    hidden_count: int = 2
    hidden_units: int = 512
    dropout_keep_input: float = 0.8
    dropout_keep_hidden: float = 0.5
    lr0: float = 3.0
    lr_decay: float = 0.998
    momentum0: float = 0.5
    momentum_final: float = 0.99
    momentum_ramp_epochs: int = 500
    epochs: int = 1000
    batch_size: int = 128


@dataclass
class CombinationSettings:
    row_index: int = 2
    nine_patch_weight: float = 1.0 / 9.0
    whole_image_weight: float = 1.0
    row_weight: float = 1.0
    nine_patch_model: str | None = None
    whole_image_model: str | None = None
    row_model: str | None = None


@dataclass
class CascadeSettings:
    routing: str = "per_patch"
    gender_model: str | None = None
    male_age_model: str | None = None
    female_age_model: str | None = None

    def __post_init__(self):
        if self.routing not in ("per_patch", "per_image"):
            raise ConfigError(f"routing must be per_patch or per_image, got {self.routing!r}")


@dataclass
class ExperimentConfig:
    task: str
    method: str
    manifest: str
    images_root: str
    seed: int = 0
    folds: int | None = None
    test_fold: int | None = None
    train_folds: list[int] | None = None
    out_dir: str = "runs"
    jobs: int = 1
    model_path: str | None = None
    crop: CropBox | None = None
    image_side: int = 60
    balance: BalanceSpec = field(default_factory=BalanceSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    edge: EdgeSpec = field(default_factory=EdgeSpec)
    rows: RowSpec = field(default_factory=RowSpec)
    whole_side: int = 32
    mlp: MlpSettings = field(default_factory=MlpSettings)
    combination: CombinationSettings = field(default_factory=CombinationSettings)
    cascade: CascadeSettings = field(default_factory=CascadeSettings)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "cascade" and self.task != "age_given_gender":
            raise ConfigError("method cascade requires task age_given_gender")


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> list[int]:
    return [int(tok) for tok in raw.replace(",", " ").split()]


def _parse_crop(raw: str) -> CropBox | None:
    if raw.strip().lower() == "none":
        return None
    parts = [int(tok) for tok in raw.split()]
    if len(parts) != 4:
        raise ValueError("crop must be 'top left height width' or 'none'")
    return CropBox(*parts)


# section -> key -> converter.  This is the complete config surface.
_SCHEMA = {
    "experiment": {
        "task": str, "method": str, "seed": int, "folds": int,
        "test_fold": int, "train_folds": _parse_int_list, "out_dir": str,
        "jobs": int, "model_path": str,
    },
    "data": {
        "manifest": str, "images_root": str, "crop": _parse_crop,
        "image_side": int,
    },
    "balance": {"enabled": _parse_bool, "majority": str, "keep_fraction": float},
    "grid": {"patch_h": int, "patch_w": int, "overlap": float},
    "edge": {
        "detector": str, "blur_size": int, "blur_sigma": float,
        "threshold": float, "canny_low": float, "canny_high": float,
        "patch_side": int,
    },
    "rows": {"n_rows": int, "row_h": int},
    "whole_image": {"side": int},
    "mlp": {
        "hidden_count": int, "hidden_units": int,
        "dropout_keep_input": float, "dropout_keep_hidden": float,
        "lr0": float, "lr_decay": float, "momentum0": float,
        "momentum_final": float, "momentum_ramp_epochs": int,
        "epochs": int, "batch_size": int,
    },
    "combination": {
        "row_index": int, "nine_patch_weight": float,
        "whole_image_weight": float, "row_weight": float,
        "nine_patch_model": str, "whole_image_model": str, "row_model": str,
    },
    "cascade": {
        "routing": str, "gender_model": str, "male_age_model": str,
        "female_age_model": str,
    },
}

_REQUIRED = [("experiment", "task"), ("experiment", "method"),
             ("data", "manifest"), ("data", "images_root")]


def parse_config(path) -> ExperimentConfig:
    """Read and validate an experiment config file."""
    cp = configparser.ConfigParser(interpolation=None)
    read = cp.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"config file {path} not found or unreadable")

    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    for section, key in _REQUIRED:
        if key not in values.get(section, {}):
            raise ConfigError(f"missing required key {key!r} in section [{section}]")

    exp = values.get("experiment", {})
    data = values.get("data", {})
    image_side = data.get("image_side", 60)
    grid_kwargs = values.get("grid", {})
    try:
        return ExperimentConfig(
            task=exp["task"],
            method=exp["method"],
            manifest=data["manifest"],
            images_root=data["images_root"],
            seed=exp.get("seed", 0),
            folds=exp.get("folds"),
            test_fold=exp.get("test_fold"),
            train_folds=exp.get("train_folds"),
            out_dir=exp.get("out_dir", "runs"),
            jobs=exp.get("jobs", 1),
            model_path=exp.get("model_path"),
            crop=data.get("crop"),
            image_side=image_side,
            balance=BalanceSpec(**values.get("balance", {})),
            grid=GridSpec(image_side=image_side, **grid_kwargs),
            edge=EdgeSpec(**values.get("edge", {})),
            rows=RowSpec(**values.get("rows", {})),
            whole_side=values.get("whole_image", {}).get("side", 32),
            mlp=MlpSettings(**values.get("mlp", {})),
            combination=CombinationSettings(**values.get("combination", {})),
            cascade=CascadeSettings(**values.get("cascade", {})),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def render_config(cfg: ExperimentConfig) -> str:
    """Resolved config as INI text; echoed into run outputs for replay."""
    lines = ["[experiment]",
             f"task = {cfg.task}",
             f"method = {cfg.method}",
             f"seed = {cfg.seed}"]
    if cfg.folds is not None:
        lines.append(f"folds = {cfg.folds}")
    if cfg.test_fold is not None:
        lines.append(f"test_fold = {cfg.test_fold}")
    if cfg.train_folds is not None:
        lines.append(f"train_folds = {' '.join(map(str, cfg.train_folds))}")
    lines += [f"out_dir = {cfg.out_dir}", f"jobs = {cfg.jobs}"]
    if cfg.model_path:
        lines.append(f"model_path = {cfg.model_path}")
    crop = "none" if cfg.crop is None else \
        f"{cfg.crop.top} {cfg.crop.left} {cfg.crop.height} {cfg.crop.width}"
    lines += ["", "[data]",
              f"manifest = {cfg.manifest}",
              f"images_root = {cfg.images_root}",
              f"crop = {crop}",
              f"image_side = {cfg.image_side}",
              "", "[balance]",
              f"enabled = {str(cfg.balance.enabled).lower()}",
              f"majority = {cfg.balance.majority}",
              f"keep_fraction = {cfg.balance.keep_fraction!r}",
              "", "[grid]",
              f"patch_h = {cfg.grid.patch_h}",
              f"patch_w = {cfg.grid.patch_w}",
              f"overlap = {cfg.grid.overlap!r}",
              "", "[edge]",
              f"detector = {cfg.edge.detector}",
              f"blur_size = {cfg.edge.blur_size}",
              f"blur_sigma = {cfg.edge.blur_sigma!r}",
              f"threshold = {cfg.edge.threshold!r}",
              f"canny_low = {cfg.edge.canny_low!r}",
              f"canny_high = {cfg.edge.canny_high!r}",
              f"patch_side = {cfg.edge.patch_side}",
              "", "[rows]",
              f"n_rows = {cfg.rows.n_rows}",
              f"row_h = {cfg.rows.row_h}",
              "", "[whole_image]",
              f"side = {cfg.whole_side}",
              "", "[mlp]"]
    for f in fields(MlpSettings):
        lines.append(f"{f.name} = {getattr(cfg.mlp, f.name)!r}")
    lines += ["", "[combination]"]
    for f in fields(CombinationSettings):
        val = getattr(cfg.combination, f.name)
        if val is not None:
            lines.append(f"{f.name} = {val!r}" if isinstance(val, float)
                         else f"{f.name} = {val}")
    lines += ["", "[cascade]"]
    for f in fields(CascadeSettings):
        val = getattr(cfg.cascade, f.name)
        if val is not None:
            lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"
