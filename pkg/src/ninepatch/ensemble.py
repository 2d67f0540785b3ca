"""Posterior fusion: weighted multi-source combination, five-row averaging,
and the gender-conditioned age cascade.

All member networks are read-only here; member order fixes the summation
order so fused results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import patchgen
from .errors import ConfigError, InvalidInputError
from .evaluation import ImagePrediction, average_posteriors
from .patchgen import GridSpec

NINE_PATCH_WEIGHT = 1.0 / 9.0


@dataclass(frozen=True)
class NinePatchSource:
    """Grid patches as fusion units; default weight 1/9 per posterior so the
    nine patches jointly weigh as much as one whole image."""

    grid: GridSpec = field(default_factory=GridSpec)

    def extract(self, img, image_id=""):
        return patchgen.grid_patches(img, self.grid, image_id)


@dataclass(frozen=True)
class WholeImageSource:
    side: int = 32

    def extract(self, img, image_id=""):
        return [patchgen.whole_image_vector(img, self.side, image_id)]


@dataclass(frozen=True)
class RowSource:
    """One horizontal strip (1-based index) out of an even row split."""

    index: int = 2
    n_rows: int = 5
    row_h: int = 20

    def __post_init__(self):
        if not 1 <= self.index <= self.n_rows:
            raise ConfigError(f"row index {self.index} outside 1..{self.n_rows}")

    def extract(self, img, image_id=""):
        rows = patchgen.row_patches(img, self.n_rows, self.row_h, image_id)
        return [rows[self.index - 1]]


@dataclass
class Member:
    net: object          # trained Mlp (anything with .forward / .n_classes)
    source: object       # one of the sources above
    weight: float        # applied to every posterior this member emits

    def __post_init__(self):
        if self.weight <= 0:
            raise ConfigError(f"member weight must be positive, got {self.weight}")


@dataclass
class CombinationSpec:
    members: list[Member]

    def __post_init__(self):
        if not self.members:
            raise ConfigError("a combination needs at least one member")
        counts = {m.net.n_classes for m in self.members}
        if len(counts) != 1:
            raise ConfigError(f"members disagree on class count: {sorted(counts)}")


def member_units(spec: CombinationSpec, img, image_id: str = ""):
    """Per-member (patches, posteriors, weight) triples for one image."""
    out = []
    for member in spec.members:
        patches = member.source.extract(img, image_id)
        feats = np.array([p.features for p in patches])
        posts = member.net.forward(feats)
        out.append((patches, posts, member.weight))
    return out


def combine_predict(spec: CombinationSpec, img, image_id: str = "",
                    true_class: int | None = None) -> ImagePrediction:
    """Fuse all member posteriors by their weights and take the argmax.

    Reduces exactly to plain posterior averaging when the spec has a single
    member of weight 1.
    """
    units = member_units(spec, img, image_id)
    posts = np.vstack([p for _, p, _ in units])
    weights = np.concatenate([np.full(p.shape[0], w) for _, p, w in units])
    avg = average_posteriors(posts, weights)
    return ImagePrediction(image_id, avg, int(np.argmax(avg)), true_class)


def five_row_predict(row_nets, img, row_h: int = 20, image_id: str = "",
                     true_class: int | None = None) -> ImagePrediction:
    """Each strip classified by its own network; equal-weight average."""
    if not row_nets:
        raise ConfigError("no row networks given")
    counts = {net.n_classes for net in row_nets}
    if len(counts) != 1:
        raise ConfigError(f"row networks disagree on class count: {sorted(counts)}")
    rows = patchgen.row_patches(img, len(row_nets), row_h, image_id)
    posts = np.array([net.forward(row.features) for net, row in zip(row_nets, rows)])
    avg = average_posteriors(posts)
    return ImagePrediction(image_id, avg, int(np.argmax(avg)), true_class)


@dataclass
class CascadeSpec:
    """Gender network routing patches to per-gender age networks.

    Routing is per patch by default (each patch gender-classified and sent
    to the matching age network); per-image routing is available for
    ablation.
    """

    gender_net: object
    male_age_net: object
    female_age_net: object
    per_patch: bool = True
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.gender_net is None or self.male_age_net is None or self.female_age_net is None:
            raise ConfigError("cascade requires gender, male-age, and female-age networks")
        if self.gender_net.n_classes != 2:
            raise ConfigError(
                f"gender network must output 2 classes, got {self.gender_net.n_classes}")
        for name, net in (("male", self.male_age_net), ("female", self.female_age_net)):
            if net.n_classes != 8:
                raise ConfigError(
                    f"{name} age network must output 8 classes, got {net.n_classes}")


def cascade_routed_posteriors(spec: CascadeSpec, img, image_id: str = ""):
    """(patches, routed 8-class posterior per patch, male-route flags)."""
    patches = patchgen.grid_patches(img, spec.grid, image_id)
    feats = np.array([p.features for p in patches])
    gender_posts = spec.gender_net.forward(feats)
    if spec.per_patch:
        to_male = gender_posts.argmax(axis=1) == 0
    else:
        avg = average_posteriors(gender_posts)
        to_male = np.full(len(patches), bool(np.argmax(avg) == 0))
    male_posts = spec.male_age_net.forward(feats)
    female_posts = spec.female_age_net.forward(feats)
    routed = np.where(to_male[:, None], male_posts, female_posts)
    return patches, routed, to_male


def cascade_predict(spec: CascadeSpec, img, image_id: str = "",
                    true_class: int | None = None) -> ImagePrediction:
    """Average the routed age posteriors of the nine patches and argmax."""
    _, routed, _ = cascade_routed_posteriors(spec, img, image_id)
    if routed.shape[0] == 0:
        raise InvalidInputError("no patches extracted for cascade prediction")
    avg = average_posteriors(routed)
    return ImagePrediction(image_id, avg, int(np.argmax(avg)), true_class)
