"""Label manifests, the 8-group age-label merge, subset construction, class
balancing by random discard, and fold splitting.

Manifest CSV layout (UTF-8, header required):
``image_id,relative_path,gender,raw_age,fold`` with gender in {m, f, u} and
raw_age either one of the 28 recognized labels or ``u``.  Fields containing
commas (the range labels) must be quoted.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, InvalidInputError, UnknownAgeLabelError
from .seeding import derive_rng

log = logging.getLogger("ninepatch")

N_AGE_GROUPS = 8
GENDERS = ("m", "f")

#: Raw label -> merged group (1..8).  28 labels total; group 6 absorbs the
#: mid-life range labels so no group is empty in any fold.
AGE_MERGE: dict[str, int] = {}
for _group, _labels in {
    1: ["(0, 2)", "2"],
    2: ["(4, 6)", "3"],
    3: ["(8, 12)", "13"],
    4: ["(15, 20)", "(8, 23)", "22"],
    5: ["(25, 32)", "(27, 32)", "23", "29", "34"],
    6: ["(38, 43)", "(38, 48)", "(32, 43)", "(38, 42)", "35", "36", "42", "45"],
    7: ["(48, 53)", "55", "56"],
    8: ["(60, 100)", "57", "58"],
}.items():
    for _raw in _labels:
        AGE_MERGE[_raw] = _group

_MANIFEST_HEADER = ["image_id", "relative_path", "gender", "raw_age", "fold"]


@dataclass(frozen=True)
class RawRecord:
    """One manifest row, labels still raw."""

    image_id: str
    path: str
    gender: str      # 'm', 'f', or 'u'
    raw_age: str     # recognized label or 'u'
    fold: int


@dataclass(frozen=True)
class LabeledSample:
    """An image admitted to one of the three subsets."""

    image_id: str
    path: str
    fold: int
    gender: str | None = None       # 'm' or 'f'
    age_group: int | None = None    # 1..8


@dataclass
class Subsets:
    """The three label subsets plus ingestion statistics."""

    gender: list[LabeledSample]
    age: list[LabeledSample]
    both: list[LabeledSample]
    unknown_age_labels: Counter
    per_fold: dict[int, int]
    per_group: dict[int, int]

    def summary(self) -> str:
        lines = [
            f"gender subset: {len(self.gender)}",
            f"age subset:    {len(self.age)}",
            f"both subset:   {len(self.both)}",
            "per group (age subset): "
            + ", ".join(f"{g}:{self.per_group.get(g, 0)}" for g in range(1, N_AGE_GROUPS + 1)),
            "per fold (all records): "
            + ", ".join(f"{f}:{n}" for f, n in sorted(self.per_fold.items())),
        ]
        if self.unknown_age_labels:
            lines.append(f"unknown age labels skipped: {dict(self.unknown_age_labels)}")
        return "\n".join(lines)


def merge_age_label(raw: str) -> int:
    """Merged group (1..8) for a recognized raw age label."""
    try:
        return AGE_MERGE[raw.strip()]
    except KeyError:
        raise UnknownAgeLabelError(raw) from None


def read_manifest(path) -> list[RawRecord]:
    """Parse a manifest CSV, validating the header and field domains."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _MANIFEST_HEADER:
            raise DataError(
                f"manifest {path}: expected header {','.join(_MANIFEST_HEADER)}, "
                f"got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"manifest {path}:{lineno}: expected 5 fields, got {len(row)}")
            image_id, rel_path, gender, raw_age, fold_s = (f.strip() for f in row)
            if not rel_path:
                raise DataError(f"manifest {path}:{lineno}: empty path")
            if gender not in ("m", "f", "u"):
                raise DataError(f"manifest {path}:{lineno}: gender must be m/f/u, got {gender!r}")
            try:
                fold = int(fold_s)
            except ValueError:
                raise DataError(f"manifest {path}:{lineno}: bad fold {fold_s!r}") from None
            if fold < 0:
                raise DataError(f"manifest {path}:{lineno}: negative fold {fold}")
            records.append(RawRecord(image_id, rel_path, gender, raw_age, fold))
    return records


def fold_count(records: Sequence[RawRecord]) -> int:
    """Fold count inferred as max fold index + 1."""
    if not records:
        return 0
    return max(r.fold for r in records) + 1


def build_subsets(records: Iterable[RawRecord]) -> Subsets:
    """Split records into gender-only, age-only, and both subsets.

    Unrecognized age labels (other than 'u') are excluded from the age
    subsets, counted, and logged rather than failing the run.
    """
    gender_set, age_set, both_set = [], [], []
    unknown = Counter()
    per_fold = Counter()
    per_group = Counter()
    for rec in records:
        per_fold[rec.fold] += 1
        has_gender = rec.gender in GENDERS
        age_group = None
        if rec.raw_age != "u":
            try:
                age_group = merge_age_label(rec.raw_age)
            except UnknownAgeLabelError:
                unknown[rec.raw_age] += 1
        if has_gender:
            gender_set.append(LabeledSample(rec.image_id, rec.path, rec.fold,
                                            gender=rec.gender))
        if age_group is not None:
            per_group[age_group] += 1
            age_set.append(LabeledSample(rec.image_id, rec.path, rec.fold,
                                         age_group=age_group))
        if has_gender and age_group is not None:
            both_set.append(LabeledSample(rec.image_id, rec.path, rec.fold,
                                          gender=rec.gender, age_group=age_group))
    if unknown:
        log.warning("skipped %d records with unknown age labels: %s",
                    sum(unknown.values()), dict(unknown))
    return Subsets(gender_set, age_set, both_set, unknown, dict(per_fold), dict(per_group))


def balance_by_discard(items: Sequence, majority_class, keep_fraction: float,
                       seed: int, label_fn: Callable = None):
    """Keep each majority-class item independently with probability
    keep_fraction; everything else passes through untouched.

    Deterministic for a fixed seed; output preserves input order.  By default
    the majority class is matched against the item's ``gender`` attribute.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise InvalidInputError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    if label_fn is None:
        label_fn = lambda item: item.gender
    if keep_fraction == 1.0:
        return list(items)
    rng = derive_rng(seed, "balance")
    kept = []
    for item in items:
        if label_fn(item) == majority_class and rng.random() >= keep_fraction:
            continue
        kept.append(item)
    return kept


def cv_split(records: Sequence, k: int, test_fold: int,
             train_folds: Sequence[int] | None = None):
    """(train, test) partition by fold index.

    With ``train_folds`` given, training is restricted to exactly those folds
    (single-fold training mode); otherwise all folds but the test fold train.
    """
    if k < 1:
        raise InvalidInputError(f"fold count must be >= 1, got {k}")
    if not 0 <= test_fold < k:
        raise InvalidInputError(f"test fold {test_fold} out of range [0, {k})")
    if train_folds is not None:
        train_folds = set(train_folds)
        bad = [f for f in train_folds if not 0 <= f < k]
        if bad:
            raise InvalidInputError(f"train folds {bad} out of range [0, {k})")
        if test_fold in train_folds:
            raise InvalidInputError(f"test fold {test_fold} cannot also train")
    test = [r for r in records if r.fold == test_fold]
    if train_folds is None:
        train = [r for r in records if r.fold != test_fold]
    else:
        train = [r for r in records if r.fold in train_folds]
    return train, test


def class_index(sample_or_patch, task: str) -> int:
    """Class index for a task: gender m/f -> 0/1, age groups 1..8 -> 0..7."""
    if task == "gender":
        gender = sample_or_patch.gender
        if gender not in GENDERS:
            raise DataError(f"sample lacks a gender label: {sample_or_patch}")
        return GENDERS.index(gender)
    if task in ("age", "age_given_gender"):
        group = sample_or_patch.age_group
        if group is None or not 1 <= group <= N_AGE_GROUPS:
            raise DataError(f"sample lacks an age-group label: {sample_or_patch}")
        return group - 1
    raise InvalidInputError(f"unknown task {task!r}")


def n_classes(task: str) -> int:
    if task == "gender":
        return 2
    if task in ("age", "age_given_gender"):
        return N_AGE_GROUPS
    raise InvalidInputError(f"unknown task {task!r}")


def class_names(task: str) -> list[str]:
    if task == "gender":
        return list(GENDERS)
    return [f"group{g}" for g in range(1, N_AGE_GROUPS + 1)]
