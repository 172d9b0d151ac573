"""Small MLP generator / dual-head discriminator.

The generator adds a lambda-weighted projected class embedding to the output
of the style-mapping network's first layer. The discriminator emits an
unconditional affine score and a projection score (feature . class row).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ContractError,
    Tensor,
    add,
    affine,
    constant,
    gather_rows,
    leaky_relu,
    mul,
    parameter,
    row_sum,
    scale,
)

Layer = tuple[Tensor, Tensor]  # (weight[in, out], bias[1, out])


@dataclass(frozen=True)
class ArchConfig:
    num_classes: int
    data_dim: int = 2
    latent_dim: int = 8
    embed_dim: int = 16
    width: int = 64
    mapping_layers: int = 2
    synthesis_layers: int = 3
    trunk_layers: int = 3
    alpha: float = 0.2

    def __post_init__(self):
        for name in ("num_classes", "data_dim", "latent_dim", "embed_dim", "width",
                     "mapping_layers", "synthesis_layers", "trunk_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class GeneratorParams:
    style_layers: list[Layer]
    class_embedding_table: Tensor
    embedding_projection: Layer
    synthesis_layers: list[Layer]
    alpha: float = 0.2

    @property
    def num_classes(self) -> int:
        return self.class_embedding_table.shape[0]

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(self.style_layers):
            out[f"G.style{i}.w"], out[f"G.style{i}.b"] = w, b
        out["G.embed"] = self.class_embedding_table
        out["G.embed_proj.w"], out["G.embed_proj.b"] = self.embedding_projection
        for i, (w, b) in enumerate(self.synthesis_layers):
            out[f"G.synth{i}.w"], out[f"G.synth{i}.b"] = w, b
        return out

    def tensors(self) -> list[Tensor]:
        return list(self.named().values())


@dataclass
class DiscriminatorParams:
    trunk_layers: list[Layer]
    uncond_head: Layer
    class_projection_table: Tensor
    alpha: float = 0.2

    @property
    def num_classes(self) -> int:
        return self.class_projection_table.shape[0]

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(self.trunk_layers):
            out[f"D.trunk{i}.w"], out[f"D.trunk{i}.b"] = w, b
        out["D.uncond.w"], out["D.uncond.b"] = self.uncond_head
        out["D.cond_proj"] = self.class_projection_table
        return out

    def tensors(self) -> list[Tensor]:
        return list(self.named().values())


@dataclass
class DiscriminatorOutput:
    uncond: Tensor  # (B, 1)
    cond: Tensor  # (B, 1)
    features: Tensor  # (B, F)
    trunk_preacts: list[Tensor] = field(default_factory=list)


def _layer(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Layer:
    w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
    return parameter(w, name=f"{name}.w"), parameter(np.zeros((1, fan_out)), name=f"{name}.b")


def init_params(arch: ArchConfig, seed: int) -> tuple[GeneratorParams, DiscriminatorParams]:
    """Scaled-normal weights (std 1/sqrt(fan_in)), zero biases, unit-normal embeddings."""
    rng = np.random.default_rng(seed)
    W = arch.width

    style = []
    fan = arch.latent_dim
    for i in range(arch.mapping_layers):
        style.append(_layer(rng, fan, W, f"G.style{i}"))
        fan = W
    embed = parameter(rng.normal(size=(arch.num_classes, arch.embed_dim)), name="G.embed")
    proj = _layer(rng, arch.embed_dim, W, "G.embed_proj")
    synth = []
    for i in range(arch.synthesis_layers):
        out = arch.data_dim if i == arch.synthesis_layers - 1 else W
        synth.append(_layer(rng, fan, out, f"G.synth{i}"))
        fan = out
    gen = GeneratorParams(style, embed, proj, synth, alpha=arch.alpha)

    trunk = []
    fan = arch.data_dim
    for i in range(arch.trunk_layers):
        trunk.append(_layer(rng, fan, W, f"D.trunk{i}"))
        fan = W
    head = _layer(rng, W, 1, "D.uncond")
    cproj = parameter(rng.normal(size=(arch.num_classes, W)), name="D.cond_proj")
    disc = DiscriminatorParams(trunk, head, cproj, alpha=arch.alpha)
    return gen, disc


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lambda must lie in [0, 1], got {lam}")


def _as_batch(x, width: int) -> Tensor:
    if not isinstance(x, Tensor):
        x = constant(x)
    if x.data.ndim == 1:
        x = Tensor(x.data.reshape(1, -1), requires_grad=x.requires_grad)
    if x.shape[1] != width:
        raise ContractError(f"expected input width {width}, got shape {x.shape}")
    return x


def _labels(c, batch: int, num_classes: int) -> np.ndarray:
    labels = np.broadcast_to(np.asarray(c, dtype=np.int64), (batch,))
    if labels.min() < 0 or labels.max() >= num_classes:
        raise IndexError(f"class id out of range [0, {num_classes})")
    return labels


def style_preactivation(params: GeneratorParams, z, c, lam: float) -> Tensor:
    """First mapping-layer pre-activation ``S1(z) + lam * E(c)``."""
    _check_lambda(lam)
    w0, b0 = params.style_layers[0]
    z = _as_batch(z, w0.shape[0])
    labels = _labels(c, z.shape[0], params.num_classes)
    pw, pb = params.embedding_projection
    emb = affine(gather_rows(params.class_embedding_table, labels), pw, pb)
    return add(affine(z, w0, b0), scale(emb, lam))


def _mapping_and_synthesis(params: GeneratorParams, pre: Tensor) -> Tensor:
    h = leaky_relu(pre, params.alpha)
    for w, b in params.style_layers[1:]:
        h = leaky_relu(affine(h, w, b), params.alpha)
    last = len(params.synthesis_layers) - 1
    for i, (w, b) in enumerate(params.synthesis_layers):
        h = affine(h, w, b)
        if i < last:
            h = leaky_relu(h, params.alpha)
    return h


def generator_forward(params: GeneratorParams, z, c, lam: float) -> Tensor:
    """Map latents ``z`` (B, latent) and class ids ``c`` to samples (B, data_dim)."""
    return _mapping_and_synthesis(params, style_preactivation(params, z, c, lam))


def unconditional_generator_forward(params: GeneratorParams, z) -> Tensor:
    """The same generator with the embedding pathway removed."""
    w0, b0 = params.style_layers[0]
    return _mapping_and_synthesis(params, affine(_as_batch(z, w0.shape[0]), w0, b0))


def discriminator_forward(params: DiscriminatorParams, x, c) -> DiscriminatorOutput:
    w0 = params.trunk_layers[0][0]
    x = _as_batch(x, w0.shape[0])
    labels = _labels(c, x.shape[0], params.num_classes)
    h = x
    pre = []
    for w, b in params.trunk_layers:
        a = affine(h, w, b)
        pre.append(a)
        h = leaky_relu(a, params.alpha)
    uw, ub = params.uncond_head
    uncond = affine(h, uw, ub)
    cond = row_sum(mul(h, gather_rows(params.class_projection_table, labels)))
    return DiscriminatorOutput(uncond, cond, h, pre)


def set_trainable(tensors, flag: bool) -> None:
    for t in tensors:
        t.requires_grad = flag
