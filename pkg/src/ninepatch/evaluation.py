"""Metrics: posterior averaging, patch/image/one-off accuracy, per-slot
tables, confusion matrices, and fold aggregation (mean with population std).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .dataset import N_AGE_GROUPS
from .errors import InvalidInputError


@dataclass
class ImagePrediction:
    """Weighted-average posterior for one image and its argmax class.

    Ties break toward the lowest class index, which is what argmax over the
    first maximal entry gives.
    """

    image_id: str
    averaged: np.ndarray
    predicted_class: int
    true_class: int | None = None


@dataclass
class EvalReport:
    """Metrics for one evaluation run (typically one held-out fold)."""

    image_level: float
    patch_level: float | None
    one_off: float | None
    per_slot: dict[int, float]
    confusion: np.ndarray
    n_images: int
    n_patches: int

    def text_lines(self) -> list[str]:
        lines = [
            f"images: {self.n_images}   units: {self.n_patches}",
            f"image level: {100 * self.image_level:.2f}%",
        ]
        if self.patch_level is not None:
            lines.append(f"patch level: {100 * self.patch_level:.2f}%")
        if self.one_off is not None:
            lines.append(f"one-off:     {100 * self.one_off:.2f}%")
        if self.per_slot:
            cells = "  ".join(
                f"{slot}:{100 * acc:.2f}%" for slot, acc in sorted(self.per_slot.items()))
            lines.append(f"per slot: {cells}")
        lines.append("confusion (rows = true):")
        for row in self.confusion:
            lines.append("  " + " ".join(f"{int(v):6d}" for v in row))
        return lines


def average_posteriors(posteriors: np.ndarray, weights=None) -> np.ndarray:
    """Normalized weighted mean of posterior rows.

    Invariant under patch order and under uniform positive rescaling of the
    weights.
    """
    posteriors = np.asarray(posteriors, dtype=np.float64)
    if posteriors.ndim != 2 or posteriors.shape[0] == 0:
        raise InvalidInputError("need at least one posterior row")
    if weights is None:
        weights = np.ones(posteriors.shape[0])
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (posteriors.shape[0],):
            raise InvalidInputError(
                f"weights shape {weights.shape} != ({posteriors.shape[0]},)")
        if (weights < 0).any() or weights.sum() <= 0:
            raise InvalidInputError("weights must be nonnegative and not all zero")
    avg = weights @ posteriors / weights.sum()
    return avg / avg.sum()


def predict_image(net, patches, weights=None, image_id: str = "",
                  true_class: int | None = None) -> ImagePrediction:
    """Classify one image as the argmax of its weighted-average posterior."""
    if not patches:
        raise InvalidInputError("cannot predict an image with no patches")
    feats = np.array([p.features for p in patches])
    posts = net.forward(feats)
    avg = average_posteriors(posts, weights)
    return ImagePrediction(image_id, avg, int(np.argmax(avg)), true_class)


def patch_level_accuracy(posteriors: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of units whose own argmax matches the label."""
    posteriors = np.asarray(posteriors)
    labels = np.asarray(labels)
    if posteriors.shape[0] == 0:
        raise InvalidInputError("no units to score")
    return float(np.mean(posteriors.argmax(axis=1) == labels))


def per_slot_accuracy(posteriors: np.ndarray, labels: np.ndarray,
                      slots) -> dict[int, float]:
    """Patch-level accuracy restricted to each integer slot."""
    hits = np.asarray(posteriors).argmax(axis=1) == np.asarray(labels)
    by_slot: dict[int, list[bool]] = {}
    for hit, slot in zip(hits, slots):
        if isinstance(slot, (int, np.integer)):
            by_slot.setdefault(int(slot), []).append(bool(hit))
    return {slot: float(np.mean(v)) for slot, v in sorted(by_slot.items())}


def one_off_accuracy(predictions: list[ImagePrediction]) -> float:
    """Fraction within one group of the truth, over the 8 ordered age groups."""
    if not predictions:
        raise InvalidInputError("no predictions to score")
    hits = 0
    for p in predictions:
        if p.averaged.shape[0] != N_AGE_GROUPS:
            raise InvalidInputError(
                "one-off accuracy is defined only for the 8 age groups, "
                f"got {p.averaged.shape[0]} classes")
        if p.true_class is None:
            raise InvalidInputError(f"prediction for {p.image_id!r} has no true class")
        hits += int(abs(p.predicted_class - p.true_class) <= 1)
    return hits / len(predictions)


def exact_accuracy(predictions: list[ImagePrediction]) -> float:
    if not predictions:
        raise InvalidInputError("no predictions to score")
    return float(np.mean([p.predicted_class == p.true_class for p in predictions]))


def confusion_matrix(predictions: list[ImagePrediction], n_classes: int) -> np.ndarray:
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p in predictions:
        out[p.true_class, p.predicted_class] += 1
    return out


def build_report(predictions: list[ImagePrediction], unit_posteriors,
                 unit_labels, unit_slots, n_classes: int,
                 one_off: bool = False) -> EvalReport:
    """Assemble an EvalReport from image predictions plus per-unit records.

    Per-unit records may be empty (fused methods with no single unit
    stream); slot accuracy only aggregates integer slots.
    """
    unit_posteriors = np.asarray(unit_posteriors, dtype=np.float64)
    has_units = unit_posteriors.size > 0
    return EvalReport(
        image_level=exact_accuracy(predictions),
        patch_level=patch_level_accuracy(unit_posteriors, unit_labels) if has_units else None,
        one_off=one_off_accuracy(predictions) if one_off else None,
        per_slot=per_slot_accuracy(unit_posteriors, unit_labels, unit_slots)
        if has_units else {},
        confusion=confusion_matrix(predictions, n_classes),
        n_images=len(predictions),
        n_patches=int(unit_posteriors.shape[0]) if has_units else 0,
    )


# ---------------------------------------------------------------------------
# Fold aggregation

@dataclass
class CrossValResult:
    """Per-fold reports plus mean and population-std aggregates."""

    fold_reports: dict[int, EvalReport]
    skipped: dict[int, str] = field(default_factory=dict)

    def _collect(self, attr: str) -> list[float]:
        vals = [getattr(r, attr) for r in self.fold_reports.values()]
        return [v for v in vals if v is not None]

    def aggregate(self, attr: str) -> tuple[float, float] | None:
        vals = self._collect(attr)
        if not vals:
            return None
        return mean_std(vals)

    def summary_lines(self) -> list[str]:
        lines = []
        for name, attr in (("image level", "image_level"),
                           ("patch level", "patch_level"),
                           ("one-off", "one_off")):
            agg = self.aggregate(attr)
            if agg is not None:
                lines.append(f"{name}: {format_mean_std(*agg)}")
        for fold, reason in sorted(self.skipped.items()):
            lines.append(f"fold {fold} skipped: {reason}")
        return lines


def mean_std(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def format_mean_std(mean: float, std: float) -> str:
    """Accuracy in the conventional percent style, e.g. 95.07±0.63%."""
    return f"{100 * mean:.2f}±{100 * std:.2f}%"


def reports_csv(result: CrossValResult) -> str:
    """One row per fold plus a summary row."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["fold", "n_images", "n_units", "image_level",
                     "patch_level", "one_off"])
    for fold, rep in sorted(result.fold_reports.items()):
        writer.writerow([
            fold, rep.n_images, rep.n_patches, repr(rep.image_level),
            "" if rep.patch_level is None else repr(rep.patch_level),
            "" if rep.one_off is None else repr(rep.one_off),
        ])

    def cell(attr):
        agg = result.aggregate(attr)
        return "" if agg is None else f"{agg[0]!r}/{agg[1]!r}"

    writer.writerow(["mean/std", "", "", cell("image_level"),
                     cell("patch_level"), cell("one_off")])
    return buf.getvalue()


def per_slot_csv(result: CrossValResult) -> str:
    """slot,accuracy rows averaged over folds."""
    slot_vals: dict[int, list[float]] = {}
    for rep in result.fold_reports.values():
        for slot, acc in rep.per_slot.items():
            slot_vals.setdefault(slot, []).append(acc)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["slot", "accuracy"])
    for slot in sorted(slot_vals):
        writer.writerow([slot, repr(float(np.mean(slot_vals[slot])))])
    return buf.getvalue()
