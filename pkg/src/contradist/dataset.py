"""Synthetic 2-D blob domains: generation, stratified splits, priors, CSV I/O.

A domain is a cloud of isotropic Gaussian blobs, one per class, rotated as a
whole about the origin and then translated.  Named presets pair two such
domains into a source/target adaptation task.  Datasets travel as CSV with
header ``f0,...,f{d-1},label`` where label ``-1`` marks unlabeled rows, so a
single format covers both domains.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import CsvParseError, ValidationError
from .rng import Rng, derive_seed

VALID_SPLITS = ("train", "test", "all")


@dataclass(frozen=True)
class BlobSpec:
    """Generator settings for one domain.

    classes: per-class pairs of (center, std); centers are 2-vectors and
    stds are positive.  rotation_deg rotates the whole domain about the
    origin, offset then translates it.  Draws are reproducible per seed.
    """

    classes: tuple[tuple[tuple[float, float], float], ...]
    samples_per_class: int
    rotation_deg: float = 0.0
    offset: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValidationError("a blob spec needs at least 2 classes")
        for i, (center, std) in enumerate(self.classes):
            if len(center) != 2:
                raise ValidationError(f"class {i}: center must be a 2-vector")
            if not all(math.isfinite(c) for c in center):
                raise ValidationError(f"class {i}: non-finite center")
            if not (std > 0 and math.isfinite(std)):
                raise ValidationError(f"class {i}: std must be positive, got {std}")
        if self.samples_per_class < 1:
            raise ValidationError("samples_per_class must be >= 1")
        if len(self.offset) != 2:
            raise ValidationError("offset must be a 2-vector")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def to_dict(self) -> dict:
        return {
            "classes": [{"center": list(c), "std": s} for c, s in self.classes],
            "samples_per_class": self.samples_per_class,
            "rotation_deg": self.rotation_deg,
            "offset": list(self.offset),
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(obj: dict) -> "BlobSpec":
        try:
            classes = tuple(
                ((float(c["center"][0]), float(c["center"][1])), float(c["std"]))
                for c in obj["classes"]
            )
            return BlobSpec(
                classes=classes,
                samples_per_class=int(obj["samples_per_class"]),
                rotation_deg=float(obj.get("rotation_deg", 0.0)),
                offset=(float(obj.get("offset", (0, 0))[0]), float(obj.get("offset", (0, 0))[1])),
                seed=int(obj.get("seed", 0)),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ValidationError(f"malformed blob spec: {exc}") from exc


@dataclass
class DomainDataset:
    """Feature matrix plus optional labels for one domain/split."""

    features: np.ndarray
    labels: np.ndarray | None = None
    domain_id: str = ""
    split: str = "all"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValidationError("features must be a nonempty n x d matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ValidationError("labels length must match feature rows")
            if self.labels.min() < 0:
                raise ValidationError("labels must be non-negative class ids")
        if self.split not in VALID_SPLITS:
            raise ValidationError(f"split must be one of {VALID_SPLITS}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def without_labels(self) -> "DomainDataset":
        """Copy with labels dropped (how a target domain enters training)."""
        return DomainDataset(self.features.copy(), None, self.domain_id, self.split)


@dataclass(frozen=True)
class Priors:
    """Class-probability vector: entries >= 0, summing to 1 within 1e-9."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.shape[0] < 1:
            raise ValidationError("priors must be a nonempty vector")
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise ValidationError("prior entries must be finite and >= 0")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValidationError(f"priors must sum to 1, got {probs.sum()!r}")

    @property
    def num_classes(self) -> int:
        return self.probs.shape[0]


def make_blobs(spec: BlobSpec, domain_id: str = "", split: str = "all") -> DomainDataset:
    """Draw one labeled blob domain.

    Class c is sampled from an isotropic Gaussian at its center with its
    std, then the whole point cloud is rotated about the origin and offset.
    Rows are grouped by class in spec order; deterministic per spec.seed.
    """
    rng = Rng(spec.seed)
    n_per = spec.samples_per_class
    blocks = []
    for center, std in spec.classes:
        z = rng.normal(2 * n_per).reshape(n_per, 2)
        blocks.append(np.asarray(center, dtype=np.float64) + std * z)
    features = np.vstack(blocks)
    theta = math.radians(spec.rotation_deg)
    rot = np.array(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    )
    features = features @ rot.T + np.asarray(spec.offset, dtype=np.float64)
    labels = np.repeat(np.arange(spec.num_classes, dtype=np.int64), n_per)
    return DomainDataset(features, labels, domain_id=domain_id, split=split)


def split(
    ds: DomainDataset, train_fraction: float, seed: int
) -> tuple[DomainDataset, DomainDataset]:
    """Stratified train/test split.

    Each class contributes floor(train_fraction * n_c) rows to train, with
    the remainder row (when the product is fractional) also going to train.
    Row selection within a class is random per seed; the two outputs are
    disjoint and their union is the input.  Unlabeled data is treated as a
    single stratum.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValidationError("train_fraction must lie strictly between 0 and 1")
    rng = Rng(derive_seed(seed, "split"))
    groups: list[np.ndarray]
    if ds.labels is None:
        groups = [np.arange(ds.n)]
    else:
        groups = [np.flatnonzero(ds.labels == c) for c in np.unique(ds.labels)]
    train_idx, test_idx = [], []
    for idx in groups:
        n_c = idx.shape[0]
        if n_c < 2:
            raise ValidationError(
                f"cannot stratify a class with {n_c} sample(s) into two splits"
            )
        n_train = math.floor(train_fraction * n_c)
        if n_train < train_fraction * n_c:
            n_train += 1  # remainder goes to train
        if n_train >= n_c:
            raise ValidationError(
                f"train fraction {train_fraction} leaves no test rows for a "
                f"class with {n_c} samples"
            )
        order = idx[rng.permutation(n_c)]
        train_idx.append(np.sort(order[:n_train]))
        test_idx.append(np.sort(order[n_train:]))
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)

    def _take(rows: np.ndarray, name: str) -> DomainDataset:
        labels = None if ds.labels is None else ds.labels[rows]
        return DomainDataset(ds.features[rows], labels, ds.domain_id, name)

    return _take(tr, "train"), _take(te, "test")


def estimate_prior(labels: np.ndarray, k: int) -> Priors:
    """Empirical class frequencies of a label vector."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValidationError("cannot estimate a prior from an empty label vector")
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationError(f"labels must lie in [0, {k})")
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return Priors(counts / labels.size)


def _format_float(x: float) -> str:
    # repr gives the shortest decimal that round-trips the double exactly
    return repr(float(x))


def save_csv(ds: DomainDataset, path: str | os.PathLike) -> None:
    """Write a dataset as UTF-8 CSV; unlabeled rows carry label -1."""
    d = ds.dim
    header = ",".join(f"f{i}" for i in range(d)) + ",label"
    lines = [header]
    labels = ds.labels
    for i in range(ds.n):
        fields = [_format_float(v) for v in ds.features[i]]
        fields.append(str(int(labels[i])) if labels is not None else "-1")
        lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(
    path: str | os.PathLike,
    k: int | None = None,
    domain_id: str | None = None,
    split: str = "all",
) -> DomainDataset:
    """Read a dataset CSV written by save_csv.

    Data rows are numbered from 1 in error messages.  A file whose label
    column is all -1 loads as unlabeled; mixing -1 with real labels is a
    parse error.  When k is given, labels must be < k.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln != ""]
    if not lines:
        raise CsvParseError(f"{path}: empty file")
    header = lines[0].split(",")
    d = len(header) - 1
    if d < 1 or header != [f"f{i}" for i in range(d)] + ["label"]:
        raise CsvParseError(f"{path}: malformed header {lines[0]!r}")
    if len(lines) == 1:
        raise CsvParseError(f"{path}: no data rows")
    features = np.empty((len(lines) - 1, d), dtype=np.float64)
    labels = np.empty(len(lines) - 1, dtype=np.int64)
    for row, line in enumerate(lines[1:], start=1):
        parts = line.split(",")
        if len(parts) != d + 1:
            raise CsvParseError(
                f"{path}: row {row}: expected {d + 1} columns, got {len(parts)}"
            )
        try:
            values = [float(p) for p in parts[:-1]]
        except ValueError as exc:
            raise CsvParseError(f"{path}: row {row}: {exc}") from exc
        if not all(math.isfinite(v) for v in values):
            raise CsvParseError(f"{path}: row {row}: non-finite feature value")
        try:
            label = int(parts[-1])
        except ValueError as exc:
            raise CsvParseError(f"{path}: row {row}: bad label {parts[-1]!r}") from exc
        if label < -1:
            raise CsvParseError(f"{path}: row {row}: bad label {label}")
        if k is not None and label >= k:
            raise CsvParseError(
                f"{path}: row {row}: label {label} out of range for {k} classes"
            )
        features[row - 1] = values
        labels[row - 1] = label
    unlabeled = labels == -1
    if unlabeled.all():
        out_labels = None
    elif unlabeled.any():
        row = int(np.flatnonzero(unlabeled != unlabeled[0])[0]) + 1
        raise CsvParseError(f"{path}: row {row}: mixes labeled and unlabeled rows")
    else:
        out_labels = labels
    if domain_id is None:
        domain_id = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return DomainDataset(features, out_labels, domain_id=domain_id, split=split)


# ---------------------------------------------------------------------------
# Named two-domain presets.  The geometries are this package's own choices:
# they realize the qualitative source/target configurations of interest
# (aligned clouds, a rotated target, an overlapping source) at desk scale.
# ---------------------------------------------------------------------------

_PRESETS: dict[str, dict] = {
    "aligned": {
        "d0": {"centers": ((-2.0, 0.0), (2.0, 0.0)), "std": 0.5, "rotation": 0.0, "offset": (0.0, 0.0)},
        "d1": {"centers": ((-2.0, 0.0), (2.0, 0.0)), "std": 0.5, "rotation": 0.0, "offset": (0.5, 3.0)},
    },
    "rotated": {
        "d0": {"centers": ((-2.0, 0.0), (2.0, 0.0)), "std": 0.45, "rotation": 0.0, "offset": (0.0, 0.0)},
        "d1": {"centers": ((-2.0, 0.0), (2.0, 0.0)), "std": 0.45, "rotation": 70.0, "offset": (0.0, 0.0)},
    },
    "overlap-source": {
        "d0": {"centers": ((-1.0, 0.0), (1.0, 0.0)), "std": 0.42, "rotation": 0.0, "offset": (0.0, 0.0)},
        "d1": {"centers": ((-2.0, 0.0), (2.0, 0.0)), "std": 0.35, "rotation": 75.0, "offset": (0.0, 0.0)},
    },
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def preset_domains(
    name: str, seed: int, samples_per_class: int = 2000
) -> dict[str, BlobSpec]:
    """Blob specs for both domains of a named preset, seeded per domain."""
    if name not in _PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    out = {}
    for domain_id, geo in _PRESETS[name].items():
        out[domain_id] = BlobSpec(
            classes=tuple((c, geo["std"]) for c in geo["centers"]),
            samples_per_class=samples_per_class,
            rotation_deg=geo["rotation"],
            offset=geo["offset"],
            seed=derive_seed(seed, f"{name}/{domain_id}"),
        )
    return out
