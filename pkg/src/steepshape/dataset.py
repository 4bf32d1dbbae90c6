"""Datasets on box domains: containers, samplers, CSV/JSON round-trips.

Everything downstream (sensitivity estimation, resampling, weighting,
training) consumes the three containers defined here.  Points live in an
axis-aligned box; labels are dense float matrices; weights are a probability
vector over the rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box [lower_d, upper_d] per dimension."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.size < 1:
            raise ValueError("domain needs at least one dimension")
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have equal length")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Row-wise inclusive membership test."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainBox":
        return cls(np.asarray(d["lower"], dtype=float), np.asarray(d["upper"], dtype=float))


def _as_points(points, dim_name="points") -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"{dim_name} must be a non-empty 2-D array")
    return arr


@dataclass(frozen=True)
class LabeledDataset:
    """Sample matrix (N, n_i), label matrix (N, n_o), and the box they live in."""

    points: np.ndarray
    labels: np.ndarray
    domain: DomainBox

    def __post_init__(self):
        points = _as_points(self.points)
        labels = _as_points(self.labels, "labels")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        if points.shape[0] != labels.shape[0]:
            raise ValueError("points and labels must have the same number of rows")
        if points.shape[1] != self.domain.dim:
            raise ValueError(
                f"points have dimension {points.shape[1]}, domain has {self.domain.dim}"
            )
        inside = self.domain.contains(points)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise ValueError(f"point at row {bad} lies outside the domain box")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.points.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class WeightedDataset:
    """LabeledDataset plus one strictly positive weight per row, summing to 1."""

    points: np.ndarray
    labels: np.ndarray
    domain: DomainBox
    weights: np.ndarray

    def __post_init__(self):
        base = LabeledDataset(self.points, self.labels, self.domain)
        object.__setattr__(self, "points", base.points)
        object.__setattr__(self, "labels", base.labels)
        weights = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "weights", weights)
        if weights.size != base.points.shape[0]:
            raise ValueError("need exactly one weight per row")
        if not np.all(weights > 0):
            raise ValueError("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 (got {weights.sum()!r})")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.points.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.labels.shape[1]

    @property
    def labeled(self) -> LabeledDataset:
        return LabeledDataset(self.points, self.labels, self.domain)


def with_uniform_weights(ds: LabeledDataset) -> WeightedDataset:
    n = len(ds)
    return WeightedDataset(ds.points, ds.labels, ds.domain, np.full(n, 1.0 / n))


def uniform_sample(domain: DomainBox, n: int, seed: int) -> np.ndarray:
    """n points drawn uniformly inside the box; reproducible for a fixed seed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return domain.lower + rng.random((n, domain.dim)) * domain.width


def grid_sample(domain: DomainBox, n: int) -> np.ndarray:
    """Regular 1-D grid of n points including both endpoints."""
    if domain.dim != 1:
        raise ValueError("grid_sample only supports 1-D domains")
    if n < 2:
        raise ValueError("a grid needs at least 2 points")
    return np.linspace(domain.lower[0], domain.upper[0], n)[:, None]


def two_moons(n: int, noise_sd: float = 0.1, seed: int = 0) -> LabeledDataset:
    """Two interleaved half-circle arcs of radius 1 with Gaussian jitter.

    Class 0 is the upper half-circle centred at the origin.  Class 1 is the
    matching arc dipping down to (1, -0.5), so the moons interleave and are
    not linearly separable once jittered.  n must be even; labels are a
    single {0, 1} column.  The domain box is the bounding box of the
    generated points.
    """
    if n < 2 or n % 2 != 0:
        raise ValueError("n must be even and at least 2")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    points = np.vstack([upper, lower])
    if noise_sd > 0:
        rng = np.random.default_rng(seed)
        points = points + rng.normal(0.0, noise_sd, size=points.shape)
    labels = np.concatenate([np.zeros(half), np.ones(half)])[:, None]
    domain = DomainBox(points.min(axis=0), points.max(axis=0))
    return LabeledDataset(points, labels, domain)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Integer class column (N,) or (N, 1) to a (N, num_classes) indicator matrix."""
    flat = np.asarray(labels).ravel()
    idx = flat.astype(int)
    if not np.array_equal(flat, idx):
        raise TypeError("labels must be integer-valued to one-hot encode")
    if idx.min() < 0 or idx.max() >= num_classes:
        raise ValueError("class labels must lie in [0, num_classes)")
    out = np.zeros((idx.size, num_classes))
    out[np.arange(idx.size), idx] = 1.0
    return out


def inject_label_noise(
    ds: LabeledDataset, p: float, num_classes: int, seed: int
) -> LabeledDataset:
    """Flip the class of exactly round(p * N) rows, chosen without replacement.

    Each flipped row gets a class drawn uniformly from the other classes.
    Accepts an integer class column or one-hot labels; anything else is a
    TypeError.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if num_classes < 2:
        raise ValueError("need at least 2 classes to flip labels")
    labels = ds.labels
    if labels.shape[1] == 1:
        classes = labels.ravel()
        encoded = False
    elif labels.shape[1] == num_classes and np.all(np.isin(labels, (0.0, 1.0))) and np.all(
        labels.sum(axis=1) == 1.0
    ):
        classes = labels.argmax(axis=1).astype(float)
        encoded = True
    else:
        raise TypeError("labels must be an integer class column or one-hot rows")
    idx = classes.astype(int)
    if not np.array_equal(classes, idx) or idx.min() < 0 or idx.max() >= num_classes:
        raise TypeError("labels must be integer classes in [0, num_classes)")

    n = len(ds)
    n_flip = int(round(p * n))
    rng = np.random.default_rng(seed)
    flip_rows = rng.choice(n, size=n_flip, replace=False)
    new_idx = idx.copy()
    for row in flip_rows:
        # draw from the other classes only, so every chosen row really changes
        choices = np.delete(np.arange(num_classes), idx[row])
        new_idx[row] = rng.choice(choices)
    if encoded:
        new_labels = one_hot(new_idx, num_classes)
    else:
        new_labels = new_idx.astype(float)[:, None]
    return LabeledDataset(ds.points, new_labels, ds.domain)


def load_csv(
    path, n_inputs: int, n_outputs: int, domain: DomainBox | None = None, header: bool = False
) -> LabeledDataset:
    """Read rows of n_inputs point coordinates followed by n_outputs labels.

    No header by default; pass header=True to skip the first line.  With
    domain=None the box is inferred from the data (degenerate dimensions get
    a half-width margin of 0.5).  Malformed rows raise with their row index.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    start = 1 if header else 0
    want = n_inputs + n_outputs
    for i, line in enumerate(lines[start:], start=start):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != want:
            raise ValueError(f"row {i}: expected {want} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"row {i}: {exc}") from None
    if not rows:
        raise ValueError("no data rows in file")
    data = np.asarray(rows, dtype=float)
    points, labels = data[:, :n_inputs], data[:, n_inputs:]
    if domain is None:
        lo, hi = points.min(axis=0), points.max(axis=0)
        flat = lo == hi
        lo = np.where(flat, lo - 0.5, lo)
        hi = np.where(flat, hi + 0.5, hi)
        domain = DomainBox(lo, hi)
    return LabeledDataset(points, labels, domain)


def save_csv(ds: LabeledDataset, path) -> None:
    """Inverse of load_csv: comma-separated x then y, no header, repr floats."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(ds.points, ds.labels):
            fh.write(",".join(repr(float(v)) for v in (*x, *y)) + "\n")


def save_json(ds: LabeledDataset, path) -> None:
    payload = {
        "points": ds.points.tolist(),
        "labels": ds.labels.tolist(),
        "domain": ds.domain.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_json(path) -> LabeledDataset:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return LabeledDataset(
        np.asarray(payload["points"], dtype=float),
        np.asarray(payload["labels"], dtype=float),
        DomainBox.from_dict(payload["domain"]),
    )
