"""FID, unbiased KID, kNN precision/recall, class-wise aggregation, mode coverage.

Features are the raw sample coordinates.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .autodiff import ContractError
from .data import ClassConditionalDataset


@dataclass
class FeatureSet:
    vectors: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise ContractError(f"feature set must be a non-empty (n, d) array, got {self.vectors.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.vectors.shape[0],):
                raise ContractError("labels must align with vectors")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def restrict(self, label: int) -> "FeatureSet":
        mask = self.labels == label
        return FeatureSet(self.vectors[mask], self.labels[mask])


def _as_features(x) -> FeatureSet:
    return x if isinstance(x, FeatureSet) else FeatureSet(x)


@dataclass
class MetricsReport:
    step: int = 0
    fid: float = float("nan")
    kid: float = float("nan")
    precision: float = float("nan")
    recall: float = float("nan")
    mode_coverage: float = float("nan")
    class_fidelity: float = float("nan")
    classwise_fid: list[float] | None = None
    classwise_fid_mean: float | None = None
    classwise_kid: list[float] | None = None
    classwise_kid_mean: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- FID


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root with negative eigenvalues clamped to 0."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def fid_from_moments(mu1, sigma1, mu2, sigma2) -> float:
    mu1, mu2 = np.atleast_1d(mu1), np.atleast_1d(mu2)
    sigma1, sigma2 = np.atleast_2d(sigma1), np.atleast_2d(sigma2)
    diff = mu1 - mu2
    root1 = sqrtm_psd(sigma1)
    cross = sqrtm_psd(root1 @ sigma2 @ root1)
    val = diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * np.trace(cross)
    return float(max(val, 0.0))


def _moments(fs: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    n, d = fs.vectors.shape
    if n <= d:
        raise ContractError(f"FID needs more than {d} samples (got {n}); covariance would be degenerate")
    return fs.vectors.mean(axis=0), np.cov(fs.vectors, rowvar=False, ddof=1).reshape(d, d)


def fid(real, fake) -> float:
    real, fake = _as_features(real), _as_features(fake)
    if real.dim != fake.dim:
        raise ContractError(f"dimension mismatch: {real.dim} vs {fake.dim}")
    return fid_from_moments(*_moments(real), *_moments(fake))


# ---------------------------------------------------------------- KID


def poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    n, m = x.shape[0], y.shape[0]
    kxx, kyy, kxy = poly_kernel(x, x), poly_kernel(y, y), poly_kernel(x, y)
    sxx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    syy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(sxx + syy - 2.0 * kxy.mean())


def kid(real, fake, block_size: int | None = None) -> float:
    """Mean unbiased MMD^2 over disjoint, in-order blocks of ``block_size`` rows."""
    real, fake = _as_features(real), _as_features(fake)
    n, m = len(real), len(fake)
    if block_size is None:
        block_size = min(n, m, 100)
    if block_size < 2:
        raise ContractError(f"KID block_size must be >= 2, got {block_size}")
    if min(n, m) < block_size:
        raise ContractError(f"KID needs at least {block_size} samples per set (got {n}, {m})")
    blocks = min(n, m) // block_size
    vals = [
        mmd2_unbiased(real.vectors[i * block_size:(i + 1) * block_size],
                      fake.vectors[i * block_size:(i + 1) * block_size])
        for i in range(blocks)
    ]
    return float(np.mean(vals))


# ---------------------------------------------------------------- precision / recall


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b, metric="euclidean")


def knn_radii(x: np.ndarray, k: int) -> np.ndarray:
    """Distance from each row to its k-th nearest other row."""
    d = pairwise_distances(x, x)
    np.fill_diagonal(d, np.inf)
    return np.partition(d, k - 1, axis=1)[:, k - 1]


def _inside_fraction(query: np.ndarray, manifold: np.ndarray, k: int) -> float:
    radii = knn_radii(manifold, k)
    d = pairwise_distances(query, manifold)
    return float(np.mean((d <= radii[None, :]).any(axis=1)))


def precision_recall(real, fake, k: int = 3) -> tuple[float, float]:
    real, fake = _as_features(real), _as_features(fake)
    if k < 1 or k >= len(real) or k >= len(fake):
        raise ContractError(f"k={k} must be in [1, set size) (sizes {len(real)}, {len(fake)})")
    return _inside_fraction(fake.vectors, real.vectors, k), _inside_fraction(real.vectors, fake.vectors, k)


# ---------------------------------------------------------------- diagnostics


def mode_coverage(fake: FeatureSet, dataset: ClassConditionalDataset, radius_multiple: float = 3.0):
    """(fraction of modes hit by a same-class fake, fraction of fakes nearest a mode of their class)."""
    if fake.labels is None:
        raise ContractError("mode_coverage needs labeled fakes")
    if fake.labels.min() < 0 or fake.labels.max() >= dataset.num_classes:
        raise ContractError(f"fake labels outside [0, {dataset.num_classes})")
    radius = radius_multiple * dataset.mode_sigma
    covered = 0
    for k, centers in enumerate(dataset.mode_centers):
        pts = fake.vectors[fake.labels == k]
        if len(pts):
            d = pairwise_distances(centers, pts)
            covered += int((d <= radius).any(axis=1).sum())
    all_centers = np.concatenate(dataset.mode_centers)
    owner = np.concatenate([np.full(len(c), k) for k, c in enumerate(dataset.mode_centers)])
    nearest = owner[np.argmin(pairwise_distances(fake.vectors, all_centers), axis=1)]
    return covered / dataset.total_modes, float(np.mean(nearest == fake.labels))


_METRICS = {"fid": fid, "kid": kid}


def classwise(metric_kind: str, real: FeatureSet, fake: FeatureSet, **kwargs) -> tuple[list[float], float]:
    """Per-class metric over matched labels and its unweighted mean."""
    if metric_kind not in _METRICS:
        raise ContractError(f"unknown class-wise metric {metric_kind!r}")
    if real.labels is None or fake.labels is None:
        raise ContractError("class-wise metrics need labeled sets")
    classes = sorted(set(real.labels.tolist()) | set(fake.labels.tolist()))
    for c in classes:
        if not (real.labels == c).any():
            raise ContractError(f"class {c} missing from real set")
        if not (fake.labels == c).any():
            raise ContractError(f"class {c} missing from fake set")
    fn = _METRICS[metric_kind]
    vals = [fn(real.restrict(c), fake.restrict(c), **kwargs) for c in classes]
    return vals, float(np.mean(vals))


def compute_report(real: FeatureSet, fake: FeatureSet, dataset: ClassConditionalDataset | None = None,
                   k: int = 3, block_size: int | None = None, with_classwise: bool = False,
                   radius_multiple: float = 3.0, step: int = 0) -> MetricsReport:
    rep = MetricsReport(step=step)
    rep.fid = fid(real, fake)
    rep.kid = kid(real, fake, block_size)
    rep.precision, rep.recall = precision_recall(real, fake, k)
    if dataset is not None:
        rep.mode_coverage, rep.class_fidelity = mode_coverage(fake, dataset, radius_multiple)
    if with_classwise:
        rep.classwise_fid, rep.classwise_fid_mean = classwise("fid", real, fake)
        rep.classwise_kid, rep.classwise_kid_mean = classwise("kid", real, fake)
    return rep
