"""Dataset manifests, exponential long-tail subsampling and the synthetic stand-in dataset."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .balance import ClassCounts

log = logging.getLogger(__name__)

SPLITS = ("train", "test")


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[tuple[str, int], ...]
    class_names: tuple[str, ...]
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DataError(f"split must be one of {SPLITS}, got {self.split!r}")
        L = len(self.class_names)
        for path, label in self.records:
            if not 0 <= label < L:
                raise DataError(f"record {path!r} has label {label} outside [0, {L})")
        # canonical order: path, then label
        object.__setattr__(self, "records", tuple(sorted((str(p), int(y)) for p, y in self.records)))

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.records]

    @property
    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.records], dtype=np.int64)

    def counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.num_classes).tolist()

    def class_counts(self) -> ClassCounts:
        return ClassCounts.from_list(self.counts(), self.class_names)

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "label"])
            w.writerows(self.records)


def ingest_manifest(path, class_names: Sequence[str] | None = None, split: str = "train") -> DatasetManifest:
    """Read a ``path,label`` CSV. Labels may be integer indices or class names."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["path", "label"]:
        raise DataError(f"{path}: expected header 'path,label'")
    body = [(i + 2, r) for i, r in enumerate(rows[1:]) if r]
    if not body:
        raise DataError(f"{path}: manifest has no samples")

    names = list(class_names) if class_names is not None else None
    raw_labels = [r[1].strip() if len(r) == 2 else None for _, r in body]
    numeric = all(lab is not None and lab.lstrip("-").isdigit() for lab in raw_labels)
    if names is None:
        if numeric:
            L = max(int(lab) for lab in raw_labels) + 1
            names = [f"class_{i}" for i in range(L)]
        else:
            raise DataError(f"{path}: label names need an explicit class list")
    index = {n: i for i, n in enumerate(names)}

    records, seen = [], set()
    for (line, row), lab in zip(body, raw_labels):
        if lab is None:
            raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
        sample = row[0].strip()
        if lab.lstrip("-").isdigit():
            y = int(lab)
            if not 0 <= y < len(names):
                raise DataError(f"{path}:{line}: label {y} outside [0, {len(names)})")
        elif lab in index:
            y = index[lab]
        else:
            raise DataError(f"{path}:{line}: unknown label {lab!r}")
        if sample in seen:
            raise DataError(f"{path}:{line}: duplicate path {sample!r}")
        seen.add(sample)
        records.append((sample, y))
    return DatasetManifest(tuple(records), tuple(names), split)


def descending_order(counts: Sequence[int]) -> list[int]:
    """Class indices by descending count, ties broken by class index."""
    return sorted(range(len(counts)), key=lambda c: (-counts[c], c))


def solve_mu(original_counts: ClassCounts | Sequence[int], target_if: float) -> float:
    """Decay base giving ``target_if`` after subsampling class k (in descending order) to n_k * mu**k."""
    counts = list(original_counts.counts if isinstance(original_counts, ClassCounts) else original_counts)
    if len(counts) < 2:
        raise ValueError("need at least two classes")
    order = descending_order(counts)
    n_first, n_last = counts[order[0]], counts[order[-1]]
    ratio = n_first / n_last
    if not target_if > ratio:
        raise ValueError(
            f"imbalance factor {target_if} must exceed the existing max/min ratio {ratio:g}")
    return (n_first / (n_last * target_if)) ** (1.0 / (len(counts) - 1))


@dataclass(frozen=True)
class ImbalanceSpec:
    imbalance_factor: float
    mu: float
    class_order: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.imbalance_factor > 1:
            raise ValueError(f"imbalance factor must be > 1, got {self.imbalance_factor}")
        if not 0 < self.mu < 1:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if sorted(self.class_order) != list(range(len(self.class_order))):
            raise ValueError("class_order must be a permutation of the class indices")

    @classmethod
    def for_counts(cls, counts: Sequence[int], imbalance_factor: float, seed: int = 0) -> "ImbalanceSpec":
        return cls(float(imbalance_factor), solve_mu(counts, imbalance_factor),
                   tuple(descending_order(counts)), int(seed))

    def kept_counts(self, counts: Sequence[int]) -> list[int]:
        """floor(n_k * mu**k) per class (k = rank in ``class_order``), clamped to >= 1."""
        out = [0] * len(counts)
        for rank, c in enumerate(self.class_order):
            exact = counts[c] * self.mu ** rank
            # relative guard: analytically integer products (mu**3 = 0.1 etc.) must not round down
            kept = math.floor(exact * (1.0 + 1e-12))
            if kept < 1:
                log.warning("class %d would keep %.3g samples; clamping to 1", c, exact)
                kept = 1
            out[c] = min(kept, counts[c])
        return out


def subsample_exponential(manifest: DatasetManifest, spec: ImbalanceSpec) -> DatasetManifest:
    """Keep a seeded uniform random subset of each class following the exponential profile."""
    counts = manifest.counts()
    if len(spec.class_order) != len(counts):
        raise ValueError(f"spec covers {len(spec.class_order)} classes, manifest has {len(counts)}")
    if min(counts) < 1:
        raise DataError("every class needs at least one sample before subsampling")
    first, last = counts[spec.class_order[0]], counts[spec.class_order[-1]]
    implied = first / last * spec.mu ** (-(len(counts) - 1))
    if not math.isclose(implied, spec.imbalance_factor, rel_tol=1e-9):
        raise ValueError(
            f"spec inconsistent with manifest: mu implies IF {implied:.6g}, spec says {spec.imbalance_factor:g}")
    keep = spec.kept_counts(counts)
    rng = np.random.default_rng(spec.seed)
    labels = manifest.labels
    chosen = []
    for c in range(len(counts)):
        idx = np.flatnonzero(labels == c)
        chosen.extend(rng.choice(idx, size=keep[c], replace=False).tolist())
    records = tuple(manifest.records[i] for i in sorted(chosen))
    return DatasetManifest(records, manifest.class_names, manifest.split)


def realized_imbalance_factor(manifest: DatasetManifest) -> float:
    counts = [n for n in manifest.counts() if n > 0]
    return max(counts) / min(counts)


# ---------------------------------------------------------------------------
# synthetic data

DEFAULT_OVERLAP_PAIRS = {(3, 4): 0.5, (5, 6): 0.5}


def overlap_matrix(num_classes: int, pairs: dict[tuple[int, int], float] | None = None) -> np.ndarray:
    m = np.eye(num_classes)
    for (a, b), s in (DEFAULT_OVERLAP_PAIRS if pairs is None else pairs).items():
        m[a, b] = m[b, a] = s
    return m


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 7
    image_size: int = 32
    per_class_base: int = 700
    test_per_class: int = 100
    feature_overlap: np.ndarray | None = None
    noise_std: float = 0.6
    template_size: int = 8
    jitter: int = 2
    symmetric: bool = True
    seed: int = 0

    def overlap(self) -> np.ndarray:
        if self.feature_overlap is None:
            return overlap_matrix(self.num_classes)
        return np.asarray(self.feature_overlap, dtype=np.float64)

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.image_size < 16:
            raise ValueError(f"image_size {self.image_size} too small to place templates (minimum 16)")
        if self.per_class_base < 1 or self.test_per_class < 1:
            raise ValueError("per-class sample counts must be positive")
        ov = self.overlap()
        L = self.num_classes
        if ov.shape != (L, L):
            raise ValueError(f"feature_overlap must be {L}x{L}, got {ov.shape}")
        if not np.allclose(np.diag(ov), 1.0):
            raise ValueError("feature_overlap diagonal must be 1")
        off = ov[~np.eye(L, dtype=bool)]
        if off.size and (off.min() < 0 or off.max() >= 1):
            raise ValueError("off-diagonal feature_overlap entries must lie in [0, 1)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass
class ImageSet:
    """A manifest plus its uint8 pixels (N x ch x S x S), rows aligned with ``manifest.records``."""
    manifest: DatasetManifest
    images: np.ndarray
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.images) != len(self.manifest.records):
            raise DataError(f"{len(self.images)} images for {len(self.manifest.records)} records")

    def subset(self, manifest: DatasetManifest) -> "ImageSet":
        if self._index is None:
            self._index = {p: i for i, p in enumerate(self.manifest.paths)}
        try:
            rows = [self._index[p] for p in manifest.paths]
        except KeyError as exc:
            raise DataError(f"record {exc.args[0]!r} not present in the pixel store") from exc
        return ImageSet(manifest, self.images[rows])


def class_templates(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-class patterns (L x t x t) and their top-left anchors (L x 2).

    A pattern is a raised-cosine bump carrying a random block texture. Anchors
    sit in the left half (or on the centre column); with ``symmetric`` the
    renderer mirrors each pattern into the right half, like paired facial parts.
    """
    rng = np.random.default_rng([spec.seed, 0xC1A55])
    t, S = spec.template_size, spec.image_size
    coarse = rng.choice([-1.0, 1.0], size=(spec.num_classes, t // 2, t // 2))
    texture = np.kron(coarse, np.ones((2, 2)))
    ramp = np.sin(np.pi * (np.arange(t) + 0.5) / t)
    window = np.outer(ramp, ramp)
    templates = window * (0.6 + 0.4 * texture)
    lo = spec.jitter
    rows = np.linspace(lo, S - t - lo, 3).round().astype(int)
    centre = (S - t) // 2
    cols = np.linspace(lo, centre, 3).round().astype(int)
    grid = np.array([(r, c) for r in rows for c in cols], dtype=int)
    anchors = grid[rng.permutation(len(grid))[: spec.num_classes]]
    if spec.num_classes > len(grid):
        # classes beyond the 3x3 grid get free-floating anchors
        extra = rng.integers(lo, S - t - lo + 1, size=(spec.num_classes - len(grid), 2))
        anchors = np.concatenate([anchors, extra])
    return templates, anchors


def _render(spec: SyntheticSpec, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    templates, anchors = class_templates(spec)
    ov = spec.overlap()
    S, t, j = spec.image_size, spec.template_size, spec.jitter
    out = np.empty((len(labels), 1, S, S), dtype=np.uint8)
    for i, y in enumerate(labels):
        img = np.zeros((S, S))
        for c in np.flatnonzero(ov[y] > 0):
            dy, dx = rng.integers(-j, j + 1, size=2)
            r, q = anchors[c] + (dy, dx)
            img[r:r + t, q:q + t] += ov[y, c] * templates[c]
            if spec.symmetric and anchors[c][1] != (S - t) // 2:
                dy, dx = rng.integers(-j, j + 1, size=2)
                r, q = anchors[c][0] + dy, S - t - anchors[c][1] + dx
                img[r:r + t, q:q + t] += ov[y, c] * templates[c][:, ::-1]
        img += spec.noise_std * rng.standard_normal((S, S))
        out[i, 0] = np.clip(np.rint(96.0 + 64.0 * img), 0, 255).astype(np.uint8)
    return out


def generate_synthetic(spec: SyntheticSpec) -> tuple[ImageSet, ImageSet]:
    """Balanced train and test splits of localized class templates plus noise.

    Classes with non-zero ``feature_overlap`` also carry each other's template
    at the overlap contrast, so a sample of one class contains evidence for
    another.
    """
    spec.validate()
    names = tuple(f"class_{i}" for i in range(spec.num_classes))
    splits = []
    for k, (split, per_class) in enumerate((("train", spec.per_class_base), ("test", spec.test_per_class))):
        rng = np.random.default_rng([spec.seed, k])
        labels = np.repeat(np.arange(spec.num_classes), per_class)
        images = _render(spec, labels, rng)
        records = tuple((f"synth-{split}.rbim#{i:06d}", int(y)) for i, y in enumerate(labels))
        splits.append(ImageSet(DatasetManifest(records, names, split), images))
    return splits[0], splits[1]
