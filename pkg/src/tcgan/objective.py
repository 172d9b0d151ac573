"""Non-saturating logistic losses for the two discriminator branches and their
lambda-weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ContractError,
    Tensor,
    add,
    affine,
    constant,
    leaky_relu,
    leaky_relu_slope,
    matmul,
    mean,
    mul,
    scale,
    softplus,
    total,
    transpose,
)
from .nets import DiscriminatorParams, _as_batch

FORMULATIONS = ("additive", "convex")


def branch_d_loss(real_score: Tensor, fake_score: Tensor) -> Tensor:
    """mean softplus(-real) + mean softplus(fake)."""
    return add(mean(softplus(scale(real_score, -1.0))), mean(softplus(fake_score)))


def branch_g_loss(fake_score: Tensor) -> Tensor:
    return mean(softplus(scale(fake_score, -1.0)))


def branch_weights(lam: float, formulation: str) -> tuple[float, float]:
    """(unconditional weight, conditional weight)."""
    if formulation == "additive":
        return 1.0, lam
    if formulation == "convex":
        return 1.0 - lam, lam
    raise ContractError(f"unknown loss formulation {formulation!r}; expected one of {FORMULATIONS}")


@dataclass
class LossTerms:
    formulation: str
    lam: float
    g_uncond: Tensor
    g_cond: Tensor
    g_total: Tensor
    d_uncond: Tensor | None = None
    d_cond: Tensor | None = None
    d_total: Tensor | None = None


def _combine(uncond: Tensor, cond: Tensor, w_u: float, w_c: float, formulation: str) -> Tensor:
    if formulation == "additive":
        return add(uncond, scale(cond, w_c))
    return add(scale(uncond, w_u), scale(cond, w_c))


def combined_losses(scores_real, scores_fake, lam: float, formulation: str = "additive") -> LossTerms:
    """Branch losses on (uncond, cond) score pairs, combined by ``formulation``.

    ``scores_real`` may be None when only the generator terms are needed.
    """
    w_u, w_c = branch_weights(lam, formulation)
    fu, fc = scores_fake
    g_u, g_c = branch_g_loss(fu), branch_g_loss(fc)
    terms = LossTerms(formulation, lam, g_u, g_c, _combine(g_u, g_c, w_u, w_c, formulation))
    if scores_real is not None:
        ru, rc = scores_real
        if ru.shape[0] != fu.shape[0]:
            raise ContractError(f"batch sizes differ: real {ru.shape[0]} vs fake {fu.shape[0]}")
        terms.d_uncond = branch_d_loss(ru, fu)
        terms.d_cond = branch_d_loss(rc, fc)
        terms.d_total = _combine(terms.d_uncond, terms.d_cond, w_u, w_c, formulation)
    return terms


def input_gradient(params: DiscriminatorParams, x) -> Tensor:
    """Graph for d(uncond_score)/dx, row per sample, differentiable w.r.t. the weights.

    The trunk is piecewise linear, so the activation slopes enter as constants.
    """
    x = _as_batch(x, params.trunk_layers[0][0].shape[0])
    slopes = []
    h = x
    for w, b in params.trunk_layers:
        a = affine(h, w, b)
        slopes.append(constant(leaky_relu_slope(a, params.alpha)))
        h = leaky_relu(a, params.alpha)
    uw, _ = params.uncond_head
    g = matmul(constant(np.ones((x.shape[0], 1))), transpose(uw))
    for (w, _), s in zip(reversed(params.trunk_layers), reversed(slopes)):
        g = matmul(mul(g, s), transpose(w))
    return g


def r1_penalty(params: DiscriminatorParams, real_batch, weight: float) -> Tensor:
    """weight/2 * mean over the batch of ||grad_x uncond_score(x)||^2."""
    if weight < 0:
        raise ContractError(f"r1 weight must be >= 0, got {weight}")
    if weight == 0:
        return constant(0.0)
    g = input_gradient(params, real_batch)
    return scale(total(mul(g, g)), 0.5 * weight / g.shape[0])
