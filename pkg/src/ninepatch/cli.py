"""Command-line entry point.

Commands: extract, train, eval, gradcheck, experiment.  Exit codes:
0 success, 1 usage/config error, 2 data error, 3 training divergence.
Verbosity comes from the NINEPATCH_LOG environment variable
(error/info/debug, default info).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path

from . import dataset, mlp, patchgen, pipeline
from .config import ExperimentConfig, parse_config, render_config
from .errors import ConfigError, DataError, NinePatchError, TrainingDivergedError
from .evaluation import CrossValResult, reports_csv, per_slot_csv
from .kernels import BACKEND

log = logging.getLogger("ninepatch")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging() -> None:
    raw = os.environ.get("NINEPATCH_LOG", "info").strip().lower()
    if raw not in _LOG_LEVELS:
        raise ConfigError(
            f"NINEPATCH_LOG must be one of {sorted(_LOG_LEVELS)}, got {raw!r}")
    logging.basicConfig(level=_LOG_LEVELS[raw],
                        format="%(levelname)s %(name)s: %(message)s")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code contract."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ninepatch",
                     description="Patch-based face gender/age classification")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--folds", type=int, help="override the fold count")
        p.add_argument("--test-fold", type=int, dest="test_fold",
                       help="held-out fold index")
        p.add_argument("--jobs", type=int, help="parallel fold workers")

    add_common(sub.add_parser("extract", help="write patch dumps and stats"))
    add_common(sub.add_parser("train", help="train the configured method"))
    pe = sub.add_parser("eval", help="evaluate trained models on a test fold")
    add_common(pe)
    pe.add_argument("--models", help="directory of model files from `train` "
                                     "(default: the output directory)")
    pg = sub.add_parser("gradcheck", help="finite-difference gradient check")
    pg.add_argument("--seed", type=int, default=12345)
    pg.add_argument("--tolerance", type=float, default=1e-6)
    add_common(sub.add_parser("experiment", help="full k-fold pipeline"))
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.folds is not None:
        cfg.folds = args.folds
    if args.test_fold is not None:
        cfg.test_fold = args.test_fold
    if args.jobs is not None:
        cfg.jobs = args.jobs
    return cfg


def _load_samples(cfg: ExperimentConfig):
    records = dataset.read_manifest(cfg.manifest)
    if not records:
        return [], 0
    k = cfg.folds if cfg.folds is not None else dataset.fold_count(records)
    over = [r for r in records if r.fold >= k]
    if over:
        raise DataError(f"{len(over)} records have fold >= {k}")
    subsets = dataset.build_subsets(records)
    log.info("manifest %s:\n%s", cfg.manifest, subsets.summary())
    return pipeline.samples_for_task(subsets, cfg.task), k


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


_FILENAME_SAFE = re.compile(r"[^A-Za-z0-9._-]+")


def _dump_name(image_id: str) -> str:
    return _FILENAME_SAFE.sub("_", image_id) or "img"


def _stream_patch_dims(cfg: ExperimentConfig, stream) -> tuple[int, int]:
    if stream.kind == "grid":
        return cfg.grid.patch_h, cfg.grid.patch_w
    if stream.kind == "edge":
        return cfg.edge.patch_side, cfg.edge.patch_side
    if stream.kind == "whole":
        return cfg.whole_side, cfg.whole_side
    return cfg.rows.row_h, cfg.image_side


def cmd_extract(cfg: ExperimentConfig) -> int:
    samples, _ = _load_samples(cfg)
    out = _out_dir(cfg)
    load = pipeline.file_loader(cfg)
    cache = pipeline._ImageCache(load)
    stats = {}
    for stream in pipeline.method_streams(cfg):
        sdir = out / "patches" / stream.name
        sdir.mkdir(parents=True, exist_ok=True)
        ph, pw = _stream_patch_dims(cfg, stream)
        total = 0
        n_images = 0
        for sample in samples:
            img = cache.get(sample)
            if img is None:
                continue
            patches = pipeline.extract_stream_patches(cfg, stream, img,
                                                      sample.image_id)
            patchgen.write_patch_dump(sdir / f"{_dump_name(sample.image_id)}.npp",
                                      _dump_name(sample.image_id), patches, ph, pw)
            total += len(patches)
            n_images += 1
        stats[stream.name] = {
            "n_images": n_images,
            "total_patches": total,
            "mean_patches_per_image": total / n_images if n_images else 0.0,
        }
    stats["unreadable_images"] = len(set(cache.failures))
    (out / "extract_stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    lines = [f"{name}: {v['total_patches']} patches over {v['n_images']} images "
             f"(mean {v['mean_patches_per_image']:.2f}/image)"
             for name, v in stats.items() if isinstance(v, dict)]
    lines.append(f"unreadable images: {stats['unreadable_images']}")
    (out / "extract_stats.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        log.info("%s", line)
    return 0


def _write_stream_outputs(out: Path, models: dict) -> None:
    for name, trained in models.items():
        mlp.save_model(trained.net, out / f"{name}.npmlp",
                       class_names=trained.class_names, logs=trained.logs)
        rows = ["epoch,loss,lr,momentum,val_accuracy"]
        for e in trained.logs:
            val = "" if e.val_accuracy is None else repr(e.val_accuracy)
            rows.append(f"{e.epoch},{e.loss!r},{e.lr!r},{e.momentum!r},{val}")
        (out / f"{name}_log.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


def cmd_train(cfg: ExperimentConfig) -> int:
    samples, k = _load_samples(cfg)
    if not samples:
        raise DataError("manifest selects no usable samples for this task")
    out = _out_dir(cfg)
    if cfg.test_fold is not None:
        train_samples, _ = dataset.cv_split(samples, k, cfg.test_fold,
                                            cfg.train_folds)
    else:
        train_samples = list(samples)
    cache = pipeline._ImageCache(pipeline.file_loader(cfg))
    fold_tag = cfg.test_fold if cfg.test_fold is not None else 0
    models = pipeline.train_fold_models(cfg, train_samples, cache, fold_tag)
    _write_stream_outputs(out, models)
    (out / "config.ini").write_text(render_config(cfg), encoding="utf-8")
    log.info("wrote %d model(s) to %s", len(models), out)
    return 0


def _load_stream_models(cfg: ExperimentConfig, models_dir: Path) -> dict:
    """Resolve each stream's model file (explicit section path, else by
    stream name) and check it against the task/geometry."""
    explicit = {}
    if cfg.method == "combination":
        comb = cfg.combination
        explicit = {"grid": comb.nine_patch_model, "whole": comb.whole_image_model,
                    f"row{comb.row_index}": comb.row_model}
    elif cfg.method == "cascade":
        casc = cfg.cascade
        explicit = {"gender": casc.gender_model, "male_age": casc.male_age_model,
                    "female_age": casc.female_age_model}
    elif cfg.model_path is not None:
        streams = pipeline.method_streams(cfg)
        if len(streams) == 1:
            explicit = {streams[0].name: cfg.model_path}
    models = {}
    for stream in pipeline.method_streams(cfg):
        path = explicit.get(stream.name) or models_dir / f"{stream.name}.npmlp"
        if not Path(path).exists():
            raise ConfigError(f"model file for stream {stream.name!r} not found: {path}")
        net, meta = mlp.load_model(path)
        expected_classes = dataset.n_classes(stream.label_task)
        if net.n_classes != expected_classes:
            raise ConfigError(
                f"model {path} outputs {net.n_classes} classes; stream "
                f"{stream.name!r} needs {expected_classes}")
        expected_dim = pipeline.stream_input_dim(cfg, stream)
        if net.input_dim != expected_dim:
            raise ConfigError(
                f"model {path} expects {net.input_dim} inputs; stream "
                f"{stream.name!r} provides {expected_dim}")
        models[stream.name] = pipeline.TrainedStream(
            stream, net, [], meta.get("class_names", []))
    return models


def _write_report(out: Path, result: CrossValResult) -> None:
    lines = []
    for fold, rep in sorted(result.fold_reports.items()):
        lines.append(f"[fold {fold}]")
        lines.extend(rep.text_lines())
        lines.append("")
    lines.append("[summary]")
    lines.extend(result.summary_lines())
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "report.csv").write_text(reports_csv(result), encoding="utf-8")
    (out / "per_slot.csv").write_text(per_slot_csv(result), encoding="utf-8")
    for line in lines:
        log.info("%s", line)


def cmd_eval(cfg: ExperimentConfig, models_dir: str | None) -> int:
    samples, k = _load_samples(cfg)
    if not samples:
        raise DataError("manifest selects no usable samples for this task")
    out = _out_dir(cfg)
    models = _load_stream_models(cfg, Path(models_dir or cfg.out_dir))
    if cfg.test_fold is not None:
        _, test_samples = dataset.cv_split(samples, k, cfg.test_fold)
    else:
        test_samples = list(samples)
    cache = pipeline._ImageCache(pipeline.file_loader(cfg))
    report = pipeline.evaluate_fold(cfg, models, test_samples, cache)
    fold_key = cfg.test_fold if cfg.test_fold is not None else 0
    _write_report(out, CrossValResult({fold_key: report}))
    return 0


def cmd_gradcheck(seed: int, tolerance: float) -> int:
    report = mlp.gradient_check(seed=seed, tolerance=tolerance)
    status = "PASS" if report.passed else "FAIL"
    print(f"gradcheck {status}: max relative error {report.max_rel_error:.3e} "
          f"(tolerance {tolerance:g}, dims {report.dims}, "
          f"{report.n_batches} batches, kernel backend {BACKEND})")
    return 0 if report.passed else 1


def cmd_experiment(cfg: ExperimentConfig) -> int:
    samples, k = _load_samples(cfg)
    if not samples:
        raise DataError("manifest selects no usable samples for this task")
    out = _out_dir(cfg)
    output = pipeline.cross_validate(cfg, samples, k, jobs=cfg.jobs)
    if not output.fold_runs:
        raise DataError("every fold was skipped; nothing to report")
    for fold, run in sorted(output.fold_runs.items()):
        fold_dir = out / f"fold{fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        _write_stream_outputs(fold_dir, run.models)
    (out / "config.ini").write_text(render_config(cfg), encoding="utf-8")
    _write_report(out, output.result)
    return 0


def main(argv=None) -> int:
    try:
        _configure_logging()
        args = _build_parser().parse_args(argv)
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed, args.tolerance)
        cfg = _load_config(args)
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.models)
        if args.command == "experiment":
            return cmd_experiment(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    except TrainingDivergedError as exc:
        log.error("training diverged: %s", exc)
        return 3
    except DataError as exc:
        log.error("%s", exc)
        return 2
    except NinePatchError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
