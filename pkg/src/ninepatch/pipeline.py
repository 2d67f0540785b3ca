"""Experiment orchestration: stream extraction, per-fold training, held-out
evaluation, and the k-fold cross-validation harness.

A *stream* is one (network, input source, label task) triple; plain methods
have a single stream, the five-row method has one per row, the combination
has three, and the cascade has gender plus two per-gender age streams.
Balancing by discard applies to gender-labeled training streams only, never
to test data.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset, ensemble, imageio, patchgen
from . import mlp as mlp_mod
from .config import ExperimentConfig
from .dataset import LabeledSample, class_index, class_names, n_classes
from .ensemble import CascadeSpec, CombinationSpec, Member, NinePatchSource, \
    RowSource, WholeImageSource
from .errors import ConfigError, DataError
from .evaluation import CrossValResult, EvalReport, ImagePrediction, \
    average_posteriors, build_report
from .seeding import derive_seed

log = logging.getLogger("ninepatch")


@dataclass(frozen=True)
class Stream:
    """One network to train: where its inputs come from and how it is labeled."""

    name: str
    kind: str                   # grid | edge | whole | row
    label_task: str             # gender | age
    row_index: int = 0          # for kind == row
    gender_filter: str | None = None   # restrict training samples to one gender


def method_streams(cfg: ExperimentConfig) -> list[Stream]:
    task = "gender" if cfg.task == "gender" else "age"
    if cfg.method == "nine_patch":
        return [Stream("grid", "grid", task)]
    if cfg.method == "edge_patch":
        return [Stream("edge", "edge", task)]
    if cfg.method == "whole_image":
        return [Stream("whole", "whole", task)]
    if cfg.method == "rows":
        return [Stream(f"row{i}", "row", task, row_index=i)
                for i in range(1, cfg.rows.n_rows + 1)]
    if cfg.method == "combination":
        return [Stream("grid", "grid", task),
                Stream("whole", "whole", task),
                Stream(f"row{cfg.combination.row_index}", "row", task,
                       row_index=cfg.combination.row_index)]
    if cfg.method == "cascade":
        return [Stream("gender", "grid", "gender"),
                Stream("male_age", "grid", "age", gender_filter="m"),
                Stream("female_age", "grid", "age", gender_filter="f")]
    raise ConfigError(f"unknown method {cfg.method!r}")


def stream_input_dim(cfg: ExperimentConfig, stream: Stream) -> int:
    if stream.kind == "grid":
        return cfg.grid.patch_h * cfg.grid.patch_w
    if stream.kind == "edge":
        return cfg.edge.patch_side ** 2
    if stream.kind == "whole":
        return cfg.whole_side ** 2
    if stream.kind == "row":
        return cfg.rows.row_h * cfg.image_side
    raise ConfigError(f"unknown stream kind {stream.kind!r}")


def extract_stream_patches(cfg: ExperimentConfig, stream: Stream, img,
                           image_id: str) -> list[patchgen.Patch]:
    if stream.kind == "grid":
        return patchgen.grid_patches(img, cfg.grid, image_id)
    if stream.kind == "edge":
        mask = patchgen.edge_mask(
            img, cfg.edge.detector, cfg.edge.blur_size, cfg.edge.blur_sigma,
            cfg.edge.threshold, cfg.edge.canny_low, cfg.edge.canny_high)
        return patchgen.edge_patches(img, mask, cfg.edge.patch_side, image_id)
    if stream.kind == "whole":
        return [patchgen.whole_image_vector(img, cfg.whole_side, image_id)]
    if stream.kind == "row":
        rows = patchgen.row_patches(img, cfg.rows.n_rows, cfg.rows.row_h, image_id)
        return [rows[stream.row_index - 1]]
    raise ConfigError(f"unknown stream kind {stream.kind!r}")


def file_loader(cfg: ExperimentConfig):
    """Default loader: decode from images_root and run the preprocess chain."""
    root = Path(cfg.images_root)

    def load(sample: LabeledSample):
        return imageio.preprocess(imageio.load_image(root / sample.path),
                                  cfg.crop, cfg.image_side)

    return load


class _ImageCache:
    """Preprocessed-image cache for one fold run."""

    def __init__(self, load):
        self._load = load
        self._cache: dict[str, np.ndarray] = {}
        self.failures: list[str] = []

    def get(self, sample: LabeledSample):
        if sample.image_id not in self._cache:
            try:
                self._cache[sample.image_id] = self._load(sample)
            except (DataError, FileNotFoundError, OSError) as exc:
                log.warning("skipping unreadable image %s: %s", sample.path, exc)
                self.failures.append(sample.image_id)
                self._cache[sample.image_id] = None
        return self._cache[sample.image_id]


@dataclass
class TrainedStream:
    stream: Stream
    net: mlp_mod.Mlp
    logs: list[mlp_mod.EpochLog]
    class_names: list[str]


def _check_classes_present(labels: np.ndarray, total: int, what: str) -> None:
    missing = sorted(set(range(total)) - set(np.unique(labels).tolist()))
    if missing:
        raise DataError(f"{what} has no samples for classes {missing}")


def collect_training_matrix(cfg: ExperimentConfig, stream: Stream,
                            samples, cache: _ImageCache, fold: int):
    """Patch features and class labels for one training stream, balanced
    by discard when configured (gender-labeled streams only)."""
    pool = samples
    if stream.gender_filter is not None:
        pool = [s for s in samples if s.gender == stream.gender_filter]
    patches = []
    for sample in pool:
        img = cache.get(sample)
        if img is None:
            continue
        for p in extract_stream_patches(cfg, stream, img, sample.image_id):
            p.gender = sample.gender
            p.age_group = sample.age_group
            p.fold = sample.fold
            patches.append(p)
    if not patches:
        raise DataError(f"stream {stream.name}: no training patches")
    if cfg.balance.enabled and stream.label_task == "gender":
        before = len(patches)
        patches = dataset.balance_by_discard(
            patches, cfg.balance.majority, cfg.balance.keep_fraction,
            derive_seed(cfg.seed, f"balance:{stream.name}", fold))
        log.info("fold %d stream %s: balancing kept %d of %d patches",
                 fold, stream.name, len(patches), before)
    x = np.array([p.features for p in patches])
    y = np.array([class_index(p, stream.label_task) for p in patches])
    return x, y


def train_fold_models(cfg: ExperimentConfig, train_samples, cache: _ImageCache,
                      fold: int) -> dict[str, TrainedStream]:
    models = {}
    for stream in method_streams(cfg):
        total = n_classes(stream.label_task)
        x, y = collect_training_matrix(cfg, stream, train_samples, cache, fold)
        _check_classes_present(y, total, f"fold {fold} stream {stream.name} training")
        net_config = mlp_mod.MlpConfig.for_task(
            input_dim=stream_input_dim(cfg, stream),
            n_classes=total,
            hidden_count=cfg.mlp.hidden_count,
            hidden_units=cfg.mlp.hidden_units,
            dropout_keep_input=cfg.mlp.dropout_keep_input,
            dropout_keep_hidden=cfg.mlp.dropout_keep_hidden,
            lr0=cfg.mlp.lr0,
            lr_decay=cfg.mlp.lr_decay,
            momentum0=cfg.mlp.momentum0,
            momentum_final=cfg.mlp.momentum_final,
            momentum_ramp_epochs=cfg.mlp.momentum_ramp_epochs,
            epochs=cfg.mlp.epochs,
            batch_size=cfg.mlp.batch_size,
            seed=derive_seed(cfg.seed, f"net:{stream.name}", fold),
        )
        log.info("fold %d stream %s: training on %d patches of dim %d",
                 fold, stream.name, x.shape[0], x.shape[1])
        net, logs = mlp_mod.fit(net_config, x, y,
                                log_every=max(1, cfg.mlp.epochs // 10))
        models[stream.name] = TrainedStream(stream, net, logs,
                                            class_names(stream.label_task))
    return models


def _combination_spec(cfg: ExperimentConfig,
                      models: dict[str, TrainedStream]) -> CombinationSpec:
    comb = cfg.combination
    return CombinationSpec(members=[
        Member(models["grid"].net, NinePatchSource(cfg.grid), comb.nine_patch_weight),
        Member(models["whole"].net, WholeImageSource(cfg.whole_side),
               comb.whole_image_weight),
        Member(models[f"row{comb.row_index}"].net,
               RowSource(comb.row_index, cfg.rows.n_rows, cfg.rows.row_h),
               comb.row_weight),
    ])


def _cascade_spec(cfg: ExperimentConfig,
                  models: dict[str, TrainedStream]) -> CascadeSpec:
    return CascadeSpec(
        gender_net=models["gender"].net,
        male_age_net=models["male_age"].net,
        female_age_net=models["female_age"].net,
        per_patch=cfg.cascade.routing == "per_patch",
        grid=cfg.grid,
    )


def evaluate_fold(cfg: ExperimentConfig, models: dict[str, TrainedStream],
                  test_samples, cache: _ImageCache) -> EvalReport:
    """Image predictions plus per-unit records over one held-out fold."""
    task = "gender" if cfg.task == "gender" else "age"
    total = n_classes(task)
    one_off = task == "age"
    predictions: list[ImagePrediction] = []
    unit_posts, unit_labels, unit_slots = [], [], []

    comb_spec = _combination_spec(cfg, models) if cfg.method == "combination" else None
    casc_spec = _cascade_spec(cfg, models) if cfg.method == "cascade" else None
    row_nets = None
    if cfg.method == "rows":
        row_nets = [models[f"row{i}"].net for i in range(1, cfg.rows.n_rows + 1)]

    for sample in test_samples:
        img = cache.get(sample)
        if img is None:
            continue
        true = class_index(sample, task)
        if cfg.method in ("nine_patch", "edge_patch", "whole_image"):
            stream = next(iter(models))
            net = models[stream].net
            patches = extract_stream_patches(cfg, models[stream].stream, img,
                                             sample.image_id)
            if not patches:
                log.debug("image %s produced no units; uniform posterior",
                          sample.image_id)
                uniform = np.full(total, 1.0 / total)
                predictions.append(ImagePrediction(sample.image_id, uniform, 0, true))
                continue
            posts = net.forward(np.array([p.features for p in patches]))
            avg = average_posteriors(posts)
            predictions.append(ImagePrediction(sample.image_id, avg,
                                               int(np.argmax(avg)), true))
            unit_posts.extend(posts)
            unit_labels.extend([true] * len(patches))
            unit_slots.extend(p.slot for p in patches)
        elif cfg.method == "rows":
            pred = ensemble.five_row_predict(row_nets, img, cfg.rows.row_h,
                                             sample.image_id, true)
            predictions.append(pred)
            rows = patchgen.row_patches(img, cfg.rows.n_rows, cfg.rows.row_h,
                                        sample.image_id)
            for net, row in zip(row_nets, rows):
                unit_posts.append(net.forward(row.features))
                unit_labels.append(true)
                unit_slots.append(row.slot)
        elif cfg.method == "combination":
            units = ensemble.member_units(comb_spec, img, sample.image_id)
            posts = np.vstack([p for _, p, _ in units])
            weights = np.concatenate([np.full(p.shape[0], w) for _, p, w in units])
            avg = average_posteriors(posts, weights)
            predictions.append(ImagePrediction(sample.image_id, avg,
                                               int(np.argmax(avg)), true))
            grid_patches_, grid_posts, _ = units[0]
            unit_posts.extend(grid_posts)
            unit_labels.extend([true] * len(grid_patches_))
            unit_slots.extend(p.slot for p in grid_patches_)
        elif cfg.method == "cascade":
            patches, routed, _ = ensemble.cascade_routed_posteriors(
                casc_spec, img, sample.image_id)
            avg = average_posteriors(routed)
            predictions.append(ImagePrediction(sample.image_id, avg,
                                               int(np.argmax(avg)), true))
            unit_posts.extend(routed)
            unit_labels.extend([true] * len(patches))
            unit_slots.extend(p.slot for p in patches)
        else:
            raise ConfigError(f"unknown method {cfg.method!r}")
    if not predictions:
        raise DataError("no test images could be evaluated")
    return build_report(predictions, unit_posts, unit_labels, unit_slots,
                        total, one_off=one_off)


@dataclass
class FoldRun:
    fold: int
    models: dict[str, TrainedStream]
    report: EvalReport
    unreadable: int = 0


def samples_for_task(subsets: dataset.Subsets, task: str) -> list[LabeledSample]:
    if task == "gender":
        return subsets.gender
    if task == "age":
        return subsets.age
    if task == "age_given_gender":
        return subsets.both
    raise ConfigError(f"unknown task {task!r}")


def run_fold(cfg: ExperimentConfig, samples, k: int, test_fold: int,
             load=None) -> FoldRun:
    """Train on the other folds (or cfg.train_folds) and evaluate on one."""
    load = load or file_loader(cfg)
    train_samples, test_samples = dataset.cv_split(samples, k, test_fold,
                                                   cfg.train_folds)
    if not train_samples or not test_samples:
        raise DataError(f"fold {test_fold}: empty train or test split")
    cache = _ImageCache(load)
    task = "gender" if cfg.task == "gender" else "age"
    test_labels = np.array([class_index(s, task) for s in test_samples])
    _check_classes_present(test_labels, n_classes(task), f"fold {test_fold} test")
    models = train_fold_models(cfg, train_samples, cache, test_fold)
    report = evaluate_fold(cfg, models, test_samples, cache)
    return FoldRun(test_fold, models, report, unreadable=len(cache.failures))


def _run_fold_worker(args) -> FoldRun:
    cfg, samples, k, fold = args
    return run_fold(cfg, samples, k, fold)


@dataclass
class CrossValOutput:
    result: CrossValResult
    fold_runs: dict[int, FoldRun]


def cross_validate(cfg: ExperimentConfig, samples, k: int, load=None,
                   jobs: int = 1) -> CrossValOutput:
    """Full k-fold harness.

    Folds with a missing class (train or test side) are skipped with a
    warning and recorded in the result.  With jobs > 1 folds run as parallel
    processes using the file loader; results are identical to a sequential
    run because every fold derives its randomness from (seed, fold) alone.
    """
    if k < 2:
        raise ConfigError(f"cross-validation needs k >= 2, got {k}")
    fold_runs: dict[int, FoldRun] = {}
    skipped: dict[int, str] = {}
    if jobs > 1 and load is None:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {fold: pool.submit(_run_fold_worker, (cfg, samples, k, fold))
                       for fold in range(k)}
            for fold, future in futures.items():
                try:
                    fold_runs[fold] = future.result()
                except DataError as exc:
                    log.warning("skipping fold %d: %s", fold, exc)
                    skipped[fold] = str(exc)
    else:
        for fold in range(k):
            try:
                fold_runs[fold] = run_fold(cfg, samples, k, fold, load)
            except DataError as exc:
                log.warning("skipping fold %d: %s", fold, exc)
                skipped[fold] = str(exc)
    reports = {fold: run.report for fold, run in fold_runs.items()}
    return CrossValOutput(CrossValResult(reports, skipped), fold_runs)
