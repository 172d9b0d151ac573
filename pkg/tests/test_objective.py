import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcgan.autodiff import ContractError, Tape, backward, constant, parameter
from tcgan.nets import ArchConfig, DiscriminatorParams, discriminator_forward, init_params
from tcgan.objective import (
    branch_d_loss,
    branch_g_loss,
    combined_losses,
    input_gradient,
    r1_penalty,
)

from .oracles import central_difference

SOFTPLUS_MINUS_1 = 0.313261687518222834  # ln(1 + e^-1), 30-digit mpmath
SOFTPLUS_MINUS_2 = 0.126928011042972496  # ln(1 + e^-2)


def s(v):
    return constant(np.array(v, dtype=float).reshape(-1, 1))


def test_d_loss_values():
    assert branch_d_loss(s([0.0]), s([0.0])).item() == pytest.approx(2 * math.log(2), abs=1e-15)
    assert branch_d_loss(s([1.0]), s([-1.0])).item() == pytest.approx(2 * SOFTPLUS_MINUS_1, abs=1e-15)
    assert branch_d_loss(s([1e3]), s([-1e3])).item() == pytest.approx(0.0, abs=1e-300)


def test_g_loss_values():
    assert branch_g_loss(s([0.0])).item() == pytest.approx(math.log(2), abs=1e-15)
    assert branch_g_loss(s([2.0])).item() == pytest.approx(SOFTPLUS_MINUS_2, abs=1e-15)
    assert branch_g_loss(s([1e3])).item() == 0.0


def _scores(rng, n=6):
    return [parameter(rng.normal(size=(n, 1))) for _ in range(4)]


def test_lambda_zero_gates_conditional_branch():
    ru, rc, fu, fc = _scores(np.random.default_rng(0))
    with Tape() as tape:
        terms = combined_losses((ru, rc), (fu, fc), 0.0, "additive")
    assert terms.d_total.item() == terms.d_uncond.item()
    assert terms.g_total.item() == terms.g_uncond.item()
    backward(terms.d_total, tape)
    assert np.all(rc.grad == 0.0) and np.all(fc.grad == 0.0)
    assert np.any(ru.grad != 0.0)


def test_lambda_one_additive():
    ru, rc, fu, fc = _scores(np.random.default_rng(1))
    t = combined_losses((ru, rc), (fu, fc), 1.0, "additive")
    assert t.d_total.item() == t.d_uncond.item() + t.d_cond.item()


def test_convex_vs_additive_identity():
    ru, rc, fu, fc = _scores(np.random.default_rng(2))
    add = combined_losses((ru, rc), (fu, fc), 0.5, "additive")
    cvx = combined_losses((ru, rc), (fu, fc), 0.5, "convex")
    assert add.d_total.item() - cvx.d_total.item() == pytest.approx(0.5 * add.d_uncond.item(), abs=1e-14)
    assert add.g_total.item() - cvx.g_total.item() == pytest.approx(0.5 * add.g_uncond.item(), abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.sampled_from(["additive", "convex"]), st.integers(0, 10_000))
def test_totals_recompute_exactly(lam, form, seed):
    ru, rc, fu, fc = _scores(np.random.default_rng(seed), n=3)
    t = combined_losses((ru, rc), (fu, fc), lam, form)
    if form == "additive":
        assert t.d_total.item() == t.d_uncond.item() + lam * t.d_cond.item()
        assert t.g_total.item() == t.g_uncond.item() + lam * t.g_cond.item()
    else:
        assert t.d_total.item() == (1 - lam) * t.d_uncond.item() + lam * t.d_cond.item()
        assert t.g_total.item() == (1 - lam) * t.g_uncond.item() + lam * t.g_cond.item()


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 1000))
def test_affine_in_lambda(l1, l2, seed):
    ru, rc, fu, fc = _scores(np.random.default_rng(seed), n=3)
    a = combined_losses((ru, rc), (fu, fc), l1, "additive")
    b = combined_losses((ru, rc), (fu, fc), l2, "additive")
    assert b.d_total.item() - a.d_total.item() == pytest.approx((l2 - l1) * a.d_cond.item(), abs=1e-12)
    a = combined_losses((ru, rc), (fu, fc), l1, "convex")
    b = combined_losses((ru, rc), (fu, fc), l2, "convex")
    slope = a.d_cond.item() - a.d_uncond.item()
    assert b.d_total.item() - a.d_total.item() == pytest.approx((l2 - l1) * slope, abs=1e-12)


def test_unknown_formulation():
    ru, rc, fu, fc = _scores(np.random.default_rng(3))
    with pytest.raises(ContractError):
        combined_losses((ru, rc), (fu, fc), 0.5, "hinge")


def test_batch_mismatch():
    rng = np.random.default_rng(4)
    with pytest.raises(ContractError):
        combined_losses((s([1, 2]), s([1, 2])), (s([1]), s([1])), 0.5)


def test_r1_zero_weight():
    _, disc = init_params(ArchConfig(num_classes=2), 0)
    x = np.random.default_rng(0).normal(size=(4, 2))
    with Tape() as tape:
        pen = r1_penalty(disc, x, 0.0)
    assert pen.item() == 0.0
    assert len(tape) == 0


def _linear_disc(w):
    # one trunk layer with identity weights, slope 1 everywhere (alpha=1)
    d = len(w)
    trunk = [(parameter(np.eye(d)), parameter(np.zeros((1, d))))]
    head = (parameter(np.array(w, dtype=float).reshape(d, 1)), parameter(np.zeros((1, 1))))
    return DiscriminatorParams(trunk, head, parameter(np.zeros((1, d))), alpha=1.0)


def test_r1_linear_score():
    disc = _linear_disc([3.0, -4.0])
    for n in (1, 7):
        x = np.random.default_rng(n).normal(size=(n, 2))
        assert r1_penalty(disc, x, 0.5).item() == pytest.approx(0.25 * 25.0, rel=1e-14)


def test_r1_matches_finite_difference_gradient_norm():
    _, disc = init_params(ArchConfig(num_classes=2, width=16), 3)
    x = np.random.default_rng(9).normal(size=(5, 2))
    weight = 2.0

    def score_sum(xx):
        return discriminator_forward(disc, xx, 0).uncond.data.sum()

    xv = x.copy()
    (fd,) = central_difference(lambda: score_sum(xv), [xv])
    expected = weight / 2 * (fd ** 2).sum(1).mean()
    got = r1_penalty(disc, x, weight).item()
    assert got == pytest.approx(expected, rel=1e-3)


def test_r1_gradient_wrt_weights():
    _, disc = init_params(ArchConfig(num_classes=2, width=8, trunk_layers=2), 5)
    x = np.random.default_rng(1).normal(size=(4, 2))
    w = disc.trunk_layers[1][0]
    with Tape() as tape:
        pen = r1_penalty(disc, x, 1.0)
    backward(pen, tape)
    (fd,) = central_difference(lambda: r1_penalty(disc, x, 1.0).item(), [w.data])
    np.testing.assert_allclose(w.grad, fd, rtol=1e-4, atol=1e-8)


def test_input_gradient_shape():
    _, disc = init_params(ArchConfig(num_classes=2), 0)
    assert input_gradient(disc, np.zeros((3, 2))).shape == (3, 2)
