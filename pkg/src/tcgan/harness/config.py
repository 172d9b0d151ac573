"""Flat run configuration and the per-mode lambda routing."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..autodiff import ContractError
from ..data import LAYOUTS, DatasetSpec
from ..nets import ArchConfig
from ..objective import FORMULATIONS
from ..schedule import TransitionSchedule

MODES = (
    "unconditional",
    "conditional",
    "transitional",
    "no_transition",
    "transition_g_only",
    "transition_loss_only",
)

# SeedSequence spawn keys for the independent random streams of one run
STREAM_DATA, STREAM_INIT, STREAM_BATCH, STREAM_LATENT, STREAM_EVAL = range(5)


@dataclass(frozen=True)
class TrainingConfig:
    mode: str = "transitional"
    # schedule
    t_start: int = 1000
    t_end: int = 2000
    t_max: int = 6000
    clip_max: float = 1.0
    formulation: str = "additive"
    # data
    num_classes: int = 8
    samples_per_class: int = 20
    modes_per_class: int = 4
    mode_sigma: float = 0.05
    layout: str = "ring"
    data_seed: int | None = None
    subset_classes: int | None = None
    subset_per_class: int | None = None
    # architecture
    latent_dim: int = 8
    embed_dim: int = 16
    width: int = 64
    mapping_layers: int = 2
    synthesis_layers: int = 3
    trunk_layers: int = 3
    leaky_alpha: float = 0.2
    # optimization
    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.99
    batch_size: int = 64
    d_steps_per_g_step: int = 1
    r1_weight: float = 0.1
    # bookkeeping
    eval_every: int = 500
    n_fake_per_class: int | None = None
    sample_dump_every: int = 0
    checkpoint_every: int = 0
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.formulation not in FORMULATIONS:
            raise ContractError(f"unknown formulation {self.formulation!r}; expected one of {FORMULATIONS}")
        if self.layout not in LAYOUTS:
            raise ContractError(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if self.eval_every < 1:
            raise ContractError("eval_every must be >= 1")
        if self.batch_size < 2:
            raise ContractError("batch_size must be >= 2")
        if self.d_steps_per_g_step < 1:
            raise ContractError("d_steps_per_g_step must be >= 1")
        if self.r1_weight < 0:
            raise ContractError("r1_weight must be >= 0")
        if self.t_max < 1:
            raise ContractError("t_max must be >= 1")
        if self.n_fake_per_class is not None and self.n_fake_per_class < 1:
            raise ContractError("n_fake_per_class must be >= 1")
        if (self.subset_classes is None) != (self.subset_per_class is None):
            raise ContractError("subset_classes and subset_per_class must be given together")
        try:
            self.schedule  # noqa: B018 - validates the schedule fields
            self.arch
        except ValueError as exc:
            raise ContractError(str(exc)) from exc

    @property
    def schedule(self) -> TransitionSchedule:
        return TransitionSchedule(self.t_start, self.t_end, self.t_max, self.clip_max)

    def dataset_spec(self) -> DatasetSpec:
        seed = self.data_seed
        if seed is None:
            seed = int(np.random.SeedSequence([self.seed, STREAM_DATA]).generate_state(1)[0])
        return DatasetSpec(self.num_classes, self.samples_per_class, self.modes_per_class,
                           self.mode_sigma, self.layout, seed)

    @property
    def effective_classes(self) -> int:
        return self.subset_classes or self.num_classes

    @property
    def effective_per_class(self) -> int:
        return self.subset_per_class or self.samples_per_class

    @property
    def arch(self) -> ArchConfig:
        return ArchConfig(num_classes=self.effective_classes, latent_dim=self.latent_dim,
                          embed_dim=self.embed_dim, width=self.width,
                          mapping_layers=self.mapping_layers, synthesis_layers=self.synthesis_layers,
                          trunk_layers=self.trunk_layers, alpha=self.leaky_alpha)

    @property
    def fakes_per_class(self) -> int:
        return self.n_fake_per_class or self.effective_per_class

    def stream_seed(self, stream: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seed, stream])

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def override(self, **changes) -> "TrainingConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ContractError(f"unknown config keys: {unknown}")
        return cls(**raw)

    @classmethod
    def from_json(cls, text: str) -> "TrainingConfig":
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ContractError("config must be a flat JSON object")
        nested = [k for k, v in raw.items() if isinstance(v, (dict, list))]
        if nested:
            raise ContractError(f"config must be flat; nested values under {nested}")
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "TrainingConfig":
        return cls.from_json(Path(path).read_text())


class ModeLambdas(NamedTuple):
    generator: float
    loss: float
    formulation: str


def resolve_mode(config: TrainingConfig, t: int) -> ModeLambdas:
    """Lambda fed to the generator and to the loss at iteration ``t``."""
    lam = config.schedule.lambda_at(t)
    form = config.formulation
    mode = config.mode
    if mode == "unconditional":
        return ModeLambdas(0.0, 0.0, "additive")
    if mode == "conditional":
        # convex at lambda=1: the unconditional branch carries zero weight
        return ModeLambdas(1.0, 1.0, "convex")
    if mode == "transitional":
        return ModeLambdas(lam, lam, form)
    if mode == "no_transition":
        return ModeLambdas(1.0, 1.0, "additive")
    if mode == "transition_g_only":
        return ModeLambdas(lam, 1.0, "additive")
    if mode == "transition_loss_only":
        return ModeLambdas(1.0, lam, form)
    raise ContractError(f"unknown mode {mode!r}")
