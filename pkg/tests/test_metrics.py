import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcgan.autodiff import ContractError
from tcgan.data import DatasetSpec, make_dataset
from tcgan.metrics import (
    FeatureSet,
    classwise,
    compute_report,
    fid,
    fid_from_moments,
    kid,
    mode_coverage,
    poly_kernel,
    precision_recall,
)

from .oracles import frechet_distance_eig, mmd2_brute, precision_recall_brute


def whitened(rng, n, d=2):
    """n points with sample mean exactly 0 and (n-1)-normalized covariance exactly I."""
    x = rng.normal(size=(n, d))
    x -= x.mean(0)
    c = np.cov(x, rowvar=False)
    vals, vecs = np.linalg.eigh(c)
    return x @ vecs @ np.diag(vals ** -0.5) @ vecs.T


def random_spd(rng, d=2):
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.1 * np.eye(d)


# ---------------------------------------------------------------- FID


def test_fid_identical_sets():
    x = np.random.default_rng(0).normal(size=(50, 2))
    assert abs(fid(x, x)) < 1e-9


def test_fid_unit_shift_moments():
    assert fid_from_moments(np.zeros(2), np.eye(2), np.array([1.0, 0.0]), np.eye(2)) == 1.0


def test_fid_matches_eigen_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        mu1, mu2 = rng.normal(size=2), rng.normal(size=2)
        s1, s2 = random_spd(rng), random_spd(rng)
        assert fid_from_moments(mu1, s1, mu2, s2) == pytest.approx(frechet_distance_eig(mu1, s1, mu2, s2), abs=1e-6)


def test_fid_degenerate_set():
    with pytest.raises(ContractError, match="more than 2"):
        fid(np.zeros((2, 2)), np.zeros((5, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_fid_symmetry_and_translation(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(30, 2)) * rng.uniform(0.2, 3, size=2)
    b = rng.normal(size=(40, 2)) + rng.normal(size=2)
    shift = rng.normal(size=2) * 5
    assert fid(a, b) == pytest.approx(fid(b, a), abs=1e-9)
    assert fid(a, b) >= -1e-9
    assert fid(a + shift, b + shift) == pytest.approx(fid(a, b), abs=1e-9)


def test_fid_one_sided_translation_equal_covariances():
    rng = np.random.default_rng(2)
    a = whitened(rng, 25)
    delta = np.array([0.7, -1.9])
    assert fid(a, a + delta) == pytest.approx(delta @ delta, abs=1e-9)


# ---------------------------------------------------------------- KID


def test_kernel_at_origin():
    assert poly_kernel(np.zeros((1, 3)), np.zeros((1, 3)))[0, 0] == 1.0


def test_kid_single_block_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(10):
        x, y = rng.normal(size=(4, 2)), rng.normal(size=(4, 2)) + 0.5
        assert kid(x, y, block_size=4) == pytest.approx(mmd2_brute(x, y), abs=1e-12)


def test_kid_blocks_are_averaged():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(12, 2)), rng.normal(size=(9, 2))
    expected = np.mean([mmd2_brute(x[i * 3:(i + 1) * 3], y[i * 3:(i + 1) * 3]) for i in range(3)])
    assert kid(x, y, block_size=3) == pytest.approx(expected, abs=1e-12)


def test_kid_null_is_unbiased():
    rng = np.random.default_rng(5)
    vals = [kid(rng.normal(size=(50, 2)), rng.normal(size=(50, 2))) for _ in range(100)]
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals)) <= 3 * se


def test_kid_contracts():
    x = np.zeros((5, 2))
    with pytest.raises(ContractError):
        kid(x, x, block_size=1)
    with pytest.raises(ContractError):
        kid(x, x, block_size=6)


# ---------------------------------------------------------------- precision / recall


def test_pr_identical():
    x = np.random.default_rng(6).normal(size=(30, 2))
    assert precision_recall(x, x, 3) == (1.0, 1.0)


def test_pr_disjoint():
    x = np.random.default_rng(7).normal(size=(30, 2))
    diameter = np.ptp(x, axis=0).max()
    assert precision_recall(x, x + 1e6 * diameter, 3) == (0.0, 0.0)


def test_pr_matches_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(5):
        real, fake = rng.normal(size=(16, 2)), rng.normal(size=(16, 2)) * 1.3 + 0.4
        assert precision_recall(real, fake, 3) == precision_recall_brute(real, fake, 3)


def test_pr_monotone_under_displacement():
    rng = np.random.default_rng(9)
    real = rng.normal(size=(200, 2))
    fake = rng.normal(size=(200, 2))
    prev = (1.1, 1.1)
    for shift in (0.5, 1.0, 2.0, 3.0, 4.0):
        cur = precision_recall(real, fake + [shift, 0.0], 3)
        assert cur[0] <= prev[0] and cur[1] <= prev[1]
        prev = cur


def test_pr_k_too_large():
    x = np.zeros((3, 2))
    with pytest.raises(ContractError):
        precision_recall(x, x, 3)


# ---------------------------------------------------------------- mode coverage


@pytest.fixture
def ring():
    return make_dataset(DatasetSpec(num_classes=4, samples_per_class=20, modes_per_class=4))


def test_coverage_perfect(ring):
    pts = np.concatenate(ring.mode_centers)
    labels = np.repeat(np.arange(4), 4)
    assert mode_coverage(FeatureSet(pts, labels), ring) == (1.0, 1.0)


def test_coverage_single_mode(ring):
    labels = np.repeat(np.arange(4), 10)
    pts = np.tile(ring.mode_centers[0][0], (40, 1))
    cov, fidelity = mode_coverage(FeatureSet(pts, labels), ring)
    assert cov == 1 / ring.total_modes
    assert fidelity == pytest.approx(0.25)


def test_coverage_collapsed_generator(ring):
    rng = np.random.default_rng(10)
    # every class emits the same cloud: the whole data distribution, ignoring the label
    n = 4000
    idx = rng.integers(0, len(ring), n)
    pts = ring.points[idx]
    labels = rng.integers(0, 4, n)
    _, fidelity = mode_coverage(FeatureSet(pts, labels), ring)
    assert fidelity == pytest.approx(0.25, abs=0.03)


def test_coverage_invariant_to_duplication(ring):
    rng = np.random.default_rng(11)
    pts = ring.points + rng.normal(scale=0.1, size=ring.points.shape)
    fs = FeatureSet(pts, ring.labels)
    dup = FeatureSet(np.concatenate([pts, pts]), np.concatenate([ring.labels, ring.labels]))
    assert mode_coverage(fs, ring) == mode_coverage(dup, ring)


def test_coverage_bad_labels(ring):
    with pytest.raises(ContractError):
        mode_coverage(FeatureSet(np.zeros((1, 2)), np.array([9])), ring)


# ---------------------------------------------------------------- class-wise


def test_classwise_identical_zero():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(60, 2))
    lab = np.repeat(np.arange(3), 20)
    vals, m = classwise("fid", FeatureSet(x, lab), FeatureSet(x, lab))
    assert np.allclose(vals, 0.0, atol=1e-9) and abs(m) < 1e-9


def test_classwise_one_class_shifted():
    rng = np.random.default_rng(13)
    parts = [whitened(rng, 15) + 3 * k for k in range(4)]
    real = np.concatenate(parts)
    fake = np.concatenate([p + ([1.0, 0.0] if k == 2 else 0.0) for k, p in enumerate(parts)])
    lab = np.repeat(np.arange(4), 15)
    vals, m = classwise("fid", FeatureSet(real, lab), FeatureSet(fake, lab))
    np.testing.assert_allclose(vals, [0, 0, 1, 0], atol=1e-9)
    assert m == pytest.approx(0.25, abs=1e-9)


def test_classwise_kid_equals_restriction():
    rng = np.random.default_rng(14)
    real, fake = rng.normal(size=(40, 2)), rng.normal(size=(30, 2))
    lr, lf = rng.integers(0, 3, 40), np.repeat(np.arange(3), 10)
    vals, _ = classwise("kid", FeatureSet(real, lr), FeatureSet(fake, lf))
    for c, v in enumerate(vals):
        assert v == pytest.approx(kid(real[lr == c], fake[lf == c]), abs=1e-12)


def test_classwise_missing_class():
    x = np.random.default_rng(15).normal(size=(20, 2))
    with pytest.raises(ContractError, match="class 1"):
        classwise("fid", FeatureSet(x, np.zeros(20, int)), FeatureSet(x, np.repeat([0, 1], 10)))


def test_compute_report_fields(ring):
    real = FeatureSet(ring.points, ring.labels)
    rep = compute_report(real, real, ring, with_classwise=True)
    assert rep.fid < 1e-9 and rep.precision == 1.0 and rep.recall == 1.0
    assert 0 <= rep.mode_coverage <= 1 and rep.class_fidelity == 1.0
    assert len(rep.classwise_fid) == 4
