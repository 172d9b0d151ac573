"""Synthetic labeled point clouds with known per-class mode centers."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import ContractError

LAYOUTS = ("ring", "grid")


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 8
    samples_per_class: int = 20
    modes_per_class: int = 4
    mode_sigma: float = 0.05
    layout: str = "ring"
    seed: int = 0
    dim: int = 2

    def __post_init__(self):
        for name in ("num_classes", "samples_per_class", "modes_per_class", "dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.mode_sigma > 0:
            raise ContractError(f"mode_sigma must be > 0, got {self.mode_sigma}")
        if self.dim < 2:
            raise ContractError("data dimension must be >= 2")


@dataclass
class ClassConditionalDataset:
    points: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,) int
    mode_centers: list[np.ndarray]  # per class, (modes, d)
    mode_sigma: float
    source_mode: np.ndarray | None = None  # (N,) index into the class's centers

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[0] != self.labels.shape[0]:
            raise ContractError(f"points {self.points.shape} and labels {self.labels.shape} misaligned")
        k = len(self.mode_centers)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= k):
            raise ContractError(f"labels must lie in [0, {k})")
        missing = sorted(set(range(k)) - set(self.labels.tolist()))
        if missing:
            raise ContractError(f"classes without points: {missing}")

    @property
    def num_classes(self) -> int:
        return len(self.mode_centers)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_modes(self) -> int:
        return sum(len(c) for c in self.mode_centers)

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def __len__(self) -> int:
        return self.points.shape[0]


def ring_radius(k: int) -> float:
    return 1.0 + 0.5 * k


def _centers(spec: DatasetSpec) -> list[np.ndarray]:
    M, d = spec.modes_per_class, spec.dim
    out = []
    for k in range(spec.num_classes):
        c = np.zeros((M, d))
        if spec.layout == "ring":
            # class-specific radius; alternate classes are rotated by half a gap
            offset = (np.pi / M) * (k % 2)
            ang = offset + 2.0 * np.pi * np.arange(M) / M
            r = ring_radius(k)
            c[:, 0], c[:, 1] = r * np.cos(ang), r * np.sin(ang)
        elif spec.layout == "grid":
            c[:, 0] = np.arange(M) - (M - 1) / 2.0
            c[:, 1] = k - (spec.num_classes - 1) / 2.0
        else:
            raise ContractError(f"unknown layout {spec.layout!r}; expected one of {LAYOUTS}")
        out.append(c)
    return out


def make_dataset(spec: DatasetSpec) -> ClassConditionalDataset:
    centers = _centers(spec)
    rng = np.random.default_rng(spec.seed)
    n, M, d = spec.samples_per_class, spec.modes_per_class, spec.dim
    pts, labels, modes = [], [], []
    for k in range(spec.num_classes):
        mode_idx = np.arange(n) % M
        noise = rng.normal(0.0, spec.mode_sigma, size=(n, d))
        # radial truncation at 6 sigma keeps the draw rejection-free
        norms = np.linalg.norm(noise, axis=1, keepdims=True)
        cap = 6.0 * spec.mode_sigma
        noise = np.where(norms > cap, noise * (cap / np.maximum(norms, 1e-300)), noise)
        pts.append(centers[k][mode_idx] + noise)
        labels.append(np.full(n, k))
        modes.append(mode_idx)
    return ClassConditionalDataset(
        np.concatenate(pts), np.concatenate(labels), centers, spec.mode_sigma, np.concatenate(modes)
    )


def subset(dataset: ClassConditionalDataset, num_classes: int, samples_per_class: int, seed: int):
    """Random class subset, then random points per kept class; labels re-indexed densely.

    Kept classes keep their original relative order, so a full subset is the
    identity permutation.
    """
    sizes = dataset.class_sizes()
    if not 1 <= num_classes <= dataset.num_classes:
        raise ContractError(f"requested {num_classes} classes, dataset has {dataset.num_classes}")
    if not 1 <= samples_per_class <= sizes.min():
        raise ContractError(f"requested {samples_per_class} per class, smallest class has {sizes.min()}")
    rng = np.random.default_rng(seed)
    kept = np.sort(rng.choice(dataset.num_classes, size=num_classes, replace=False))
    idx = []
    for k in kept:
        members = np.flatnonzero(dataset.labels == k)
        idx.append(np.sort(rng.choice(members, size=samples_per_class, replace=False)))
    idx = np.concatenate(idx)
    remap = {int(k): i for i, k in enumerate(kept)}
    labels = np.array([remap[int(l)] for l in dataset.labels[idx]], dtype=np.int64)
    src = None if dataset.source_mode is None else dataset.source_mode[idx]
    return ClassConditionalDataset(
        dataset.points[idx], labels, [dataset.mode_centers[k] for k in kept], dataset.mode_sigma, src
    )


def minibatch(dataset: ClassConditionalDataset, batch_size: int, rng: np.random.Generator):
    """Uniform with-replacement draw of (points, labels)."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    idx = rng.integers(0, len(dataset), size=batch_size)
    return dataset.points[idx], dataset.labels[idx]


# ---------------------------------------------------------------- CSV I/O


def write_points_csv(path, points: np.ndarray, labels: np.ndarray) -> None:
    points = np.asarray(points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"x{i}" for i in range(points.shape[1])])
        for lab, row in zip(labels, points):
            w.writerow([int(lab)] + [repr(float(v)) for v in row])


def read_points_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if not header or header[0] != "label" or any(h != f"x{i}" for i, h in enumerate(header[1:])):
            raise ContractError(f"{path}: expected header label,x0,...; got {header}")
        rows = [row for row in r if row]
    labels = np.array([int(row[0]) for row in rows], dtype=np.int64)
    points = np.array([[float(v) for v in row[1:]] for row in rows], dtype=np.float64)
    return points.reshape(len(rows), len(header) - 1), labels


def _centers_path(path: Path) -> Path:
    return path.with_name(path.stem + "_centers.csv")


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + "_meta.json")


def save_dataset(dataset: ClassConditionalDataset, path, spec: DatasetSpec | None = None) -> None:
    """Points CSV plus sibling ``*_centers.csv`` and ``*_meta.json`` (sigma, spec)."""
    path = Path(path)
    write_points_csv(path, dataset.points, dataset.labels)
    with open(_centers_path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "mode_index"] + [f"c{i}" for i in range(dataset.dim)])
        for k, cs in enumerate(dataset.mode_centers):
            for j, c in enumerate(cs):
                w.writerow([k, j] + [repr(float(v)) for v in c])
    meta = {"mode_sigma": dataset.mode_sigma, "spec": asdict(spec) if spec else None}
    _meta_path(path).write_text(json.dumps(meta, indent=2))


def load_dataset(path, mode_sigma: float | None = None) -> ClassConditionalDataset:
    path = Path(path)
    points, labels = read_points_csv(path)
    cpath = _centers_path(path)
    if cpath.exists():
        with open(cpath, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            rows = [row for row in r if row]
        k = max(int(row[0]) for row in rows) + 1
        centers = [[] for _ in range(k)]
        for row in sorted(rows, key=lambda row: (int(row[0]), int(row[1]))):
            centers[int(row[0])].append([float(v) for v in row[2:]])
        centers = [np.array(c) for c in centers]
    else:
        centers = [points[labels == k].mean(axis=0, keepdims=True) for k in range(labels.max() + 1)]
    if mode_sigma is None:
        mpath = _meta_path(path)
        mode_sigma = json.loads(mpath.read_text())["mode_sigma"] if mpath.exists() else 1.0
    return ClassConditionalDataset(points, labels, centers, float(mode_sigma))


def with_seed(spec: DatasetSpec, seed: int) -> DatasetSpec:
    return replace(spec, seed=seed)
