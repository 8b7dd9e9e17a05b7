"""Label-distribution datasets: loading, validation, corruption, synthesis, splitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (DegenerateRow, InvalidFraction, InvalidSpec, ParseError,
                     ValidationError)

ROW_SUM_TOL = 1e-9
# load-time slack for float round-off in exported CSVs
LOAD_RENORM_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def check_label_matrix(labels: np.ndarray, tol: float = ROW_SUM_TOL) -> None:
    """Raise ValidationError unless every row is a point of the probability simplex."""
    labels = np.asarray(labels, dtype=float)
    if labels.ndim != 2:
        raise ValidationError(f"label matrix must be 2-D, got shape {labels.shape}")
    if not np.all(np.isfinite(labels)):
        raise ValidationError("label matrix contains non-finite entries")
    if np.any(labels < 0):
        i, j = np.argwhere(labels < 0)[0]
        raise ValidationError(f"negative description degree {labels[i, j]!r} at ({i}, {j})")
    if np.any(labels > 1):
        raise ValidationError("description degree above 1")
    off = np.abs(labels.sum(axis=1) - 1.0)
    if np.any(off > tol):
        i = int(np.argmax(off))
        raise ValidationError(f"label row {i} sums to {labels[i].sum()!r}, not 1")


@dataclass(frozen=True)
class LdlDataset:
    """Features X (n x d) paired with a row-stochastic label matrix D (n x m)."""

    features: np.ndarray
    labels: np.ndarray
    names: Optional[tuple] = None

    def __post_init__(self):
        features = _frozen(self.features)
        labels = _frozen(self.labels)
        if features.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise ValidationError(
                f"row-count mismatch: {features.shape[0]} feature rows, {labels.shape[0]} label rows")
        check_label_matrix(labels)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != labels.shape[1]:
                raise ValidationError(f"{len(names)} label names for {labels.shape[1]} labels")
            object.__setattr__(self, "names", names)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def m(self) -> int:
        return self.labels.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "LdlDataset":
        rows = np.asarray(rows)
        return LdlDataset(self.features[rows], self.labels[rows], self.names)

    def with_labels(self, labels) -> "LdlDataset":
        return LdlDataset(self.features, labels, self.names)


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian label noise ``mean + scale * N(0, 1)``."""

    mean: float = 0.0
    scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.scale >= 0):
            raise InvalidSpec(f"noise scale must be >= 0, got {self.scale}")


@dataclass(frozen=True)
class SynthSpec:
    n: int = 200
    m: int = 10
    d: int = 20
    rank: int = 3
    error_fraction: float = 0.05
    seed: int = 0
    # feature noise relative to the latent signal
    feature_noise: float = 0.05
    # Dirichlet concentration of the prototype distributions; 1 is uniform on the simplex
    concentration: float = 1.0

    def __post_init__(self):
        for name in ("n", "m", "d", "rank"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidSpec(f"{name} must be a positive integer, got {v!r}")
        if self.rank > min(self.n, self.m):
            raise InvalidSpec(f"rank {self.rank} exceeds min(n, m) = {min(self.n, self.m)}")
        if not (0 <= self.error_fraction < 1):
            raise InvalidSpec(f"error_fraction must lie in [0, 1), got {self.error_fraction}")
        if self.feature_noise < 0:
            raise InvalidSpec("feature_noise must be >= 0")
        if not self.concentration > 0:
            raise InvalidSpec("concentration must be positive")


class SyntheticData(NamedTuple):
    clean: LdlDataset
    corrupted: LdlDataset
    planted_error: np.ndarray
    manifest: dict


# ---------------------------------------------------------------- CSV I/O

def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_matrix(path) -> tuple[np.ndarray, Optional[list]]:
    """Read a numeric CSV; a non-numeric first row is taken as a header."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path} is empty")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path} has a header but no data rows")
    width = len(rows[0])
    for k, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(f"{path}: ragged row {k} has {len(r)} fields, expected {width}")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric cell ({exc})") from exc
    if header is not None and len(header) != width:
        raise ParseError(f"{path}: header has {len(header)} fields, data has {width}")
    return data, header


def write_matrix(path, a: np.ndarray, header: Optional[Sequence[str]] = None) -> None:
    """Write a matrix as CSV with round-trip float precision."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(list(header))
        for row in a:
            w.writerow([repr(float(v)) for v in row])


def load_dataset(features_path, labels_path) -> LdlDataset:
    features, _ = read_matrix(features_path)
    labels, names = read_matrix(labels_path)
    if features.shape[0] != labels.shape[0]:
        raise ValidationError(
            f"row-count mismatch: {features.shape[0]} feature rows, {labels.shape[0]} label rows")
    if np.any(labels < 0):
        raise ValidationError(f"{labels_path}: negative description degree")
    sums = labels.sum(axis=1)
    bad = np.abs(sums - 1.0) > LOAD_RENORM_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValidationError(f"{labels_path}: row {i} sums to {sums[i]!r}")
    labels = labels / sums[:, None]
    return LdlDataset(features, labels, tuple(names) if names else None)


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- corruption

def clamp_renormalize(rows: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero and rescale each row to sum to one.

    Raises DegenerateRow when a row has no positive mass left.
    """
    rows = np.maximum(np.asarray(rows, dtype=float), 0.0)
    sums = rows.sum(axis=1)
    dead = np.flatnonzero(sums <= 0)
    if dead.size:
        raise DegenerateRow(f"{dead.size} label row(s) clamp to all zeros (first: row {dead[0]})")
    return rows / sums[:, None]


def corrupt(dataset: LdlDataset, spec: NoiseSpec) -> LdlDataset:
    """Add ``mean + scale * G`` to the labels, then clamp and renormalize each row."""
    if spec.mean == 0 and spec.scale == 0:
        # dividing by a row sum of 1 - ulp would still perturb the last bits
        return dataset
    rng = np.random.default_rng(spec.seed)
    g = rng.standard_normal(dataset.labels.shape)
    noisy = dataset.labels + spec.mean + spec.scale * g
    return dataset.with_labels(clamp_renormalize(noisy))


# ---------------------------------------------------------------- synthesis

def _row_allocation(rng, n: int, m: int, total: int) -> np.ndarray:
    """Spread ``total`` corrupted entries over rows, at least two per touched row."""
    counts = np.zeros(n, dtype=int)
    if total == 0:
        return counts
    if m < 2:
        raise InvalidSpec("sparse corruption needs at least two labels")
    # a lone entry cannot be perturbed without leaving the simplex
    if total == 1 or (m == 2 and total % 2):
        total += 1
    order = rng.permutation(n)
    k = 0
    remaining = total
    while remaining > 0:
        row = order[k % n]
        k += 1
        if counts[row] >= m:
            continue
        if remaining == 1:
            # top up a row that already has a pair
            for r in order:
                if 2 <= counts[r] < m:
                    counts[r] += 1
                    break
            remaining = 0
            break
        add = min(2, m - counts[row])
        if add < 2 and counts[row] == 0:
            continue
        counts[row] += add
        remaining -= add
    return counts


def synthesize(spec: SynthSpec) -> SyntheticData:
    """Planted low-rank label matrix with sparse, mass-preserving corruption.

    Clean rows are mixtures of ``rank`` peaked prototype distributions. Features
    are a noisy linear image of the mixing weights, so feature-space neighbours
    share label distributions. Each corrupted row moves part of the mass of some
    labels onto other labels, which keeps the row on the simplex without a
    renormalization step; the planted error is therefore exactly sparse.
    """
    rng = np.random.default_rng(spec.seed)
    n, m, r = spec.n, spec.m, spec.rank

    weights = rng.uniform(0.0, 1.0, size=(n, r))
    prototypes = rng.dirichlet(np.full(m, spec.concentration), size=r)
    product = weights @ prototypes
    clean_labels = product / product.sum(axis=1, keepdims=True)
    mixing = weights / weights.sum(axis=1, keepdims=True)

    projection = rng.standard_normal((r, spec.d))
    features = mixing @ projection + spec.feature_noise * rng.standard_normal((n, spec.d))

    total = math.ceil(spec.error_fraction * n * m)
    counts = _row_allocation(rng, n, m, total)
    corrupted = clean_labels.copy()
    for i in np.flatnonzero(counts):
        cols = rng.choice(m, size=counts[i], replace=False)
        # larger entries donate mass, the rest receive it
        cols = cols[np.argsort(-clean_labels[i, cols], kind="stable")]
        n_donors = counts[i] // 2
        donors, receivers = cols[:n_donors], cols[n_donors:]
        moved = rng.uniform(0.5, 1.0, size=n_donors) * clean_labels[i, donors]
        share = rng.dirichlet(np.ones(receivers.size)) * moved.sum()
        corrupted[i, donors] -= moved
        corrupted[i, receivers] += share
    corrupted = np.maximum(corrupted, 0.0)
    planted = corrupted - clean_labels

    clean = LdlDataset(features, clean_labels)
    noisy = LdlDataset(features, corrupted)
    manifest = {
        "n": n, "m": m, "d": spec.d, "rank": r,
        "error_fraction": spec.error_fraction, "seed": spec.seed,
        "planted_nonzeros": int(np.count_nonzero(planted)),
    }
    return SyntheticData(clean, noisy, planted, manifest)


# ---------------------------------------------------------------- splitting

def train_size(n: int, train_fraction: float) -> int:
    """Rows assigned to the training side: ``floor(fraction * n)``, kept in [1, n-1]."""
    # the epsilon absorbs products such as 0.8 * 200 = 160.00000000000003
    return int(min(max(math.floor(train_fraction * n + 1e-9), 1), n - 1))


def split_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not (0 < train_fraction < 1):
        raise InvalidFraction(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if n < 2:
        raise InvalidFraction("cannot split fewer than two rows")
    perm = np.random.default_rng(seed).permutation(n)
    k = train_size(n, train_fraction)
    return np.sort(perm[:k]), np.sort(perm[k:])


def split(dataset: LdlDataset, train_fraction: float, seed: int) -> tuple[LdlDataset, LdlDataset]:
    train_idx, test_idx = split_indices(dataset.n, train_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)
