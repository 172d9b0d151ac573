"""Alternating discriminator / generator updates with periodic evaluation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import AdamState, Tape, adam_step, backward
from ..data import ClassConditionalDataset, make_dataset, subset, write_points_csv
from ..metrics import FeatureSet, MetricsReport, compute_report
from ..nets import (
    DiscriminatorParams,
    GeneratorParams,
    discriminator_forward,
    generator_forward,
    init_params,
    set_trainable,
)
from ..objective import combined_losses, r1_penalty
from .checkpoint import CheckpointRecord, load_checkpoint, save_checkpoint
from .config import (
    STREAM_BATCH,
    STREAM_EVAL,
    STREAM_INIT,
    STREAM_LATENT,
    TrainingConfig,
    resolve_mode,
)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "lambda", "d_total", "g_total", "fid", "kid",
               "precision", "recall", "mode_coverage", "class_fidelity")


class NumericalAbort(RuntimeError):
    """Training hit a non-finite value; a diagnostic checkpoint may have been written."""

    def __init__(self, message: str, step: int, checkpoint: Path | None = None):
        super().__init__(message)
        self.step = step
        self.checkpoint = checkpoint


@dataclass
class MetricsLog:
    rows: list[tuple] = field(default_factory=list)

    def append(self, row: tuple) -> None:
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValueError(f"log steps must increase: {row[0]} after {self.rows[-1][0]}")
        self.rows.append(tuple(row))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in self.rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        i = LOG_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.float64).reshape(len(self.rows), len(LOG_COLUMNS))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "MetricsLog":
        return cls([(int(r[0]), *map(float, r[1:])) for r in arr])

    def final(self) -> dict:
        return dict(zip(LOG_COLUMNS, self.rows[-1])) if self.rows else {}

    def best_fid_step(self) -> int | None:
        if not self.rows:
            return None
        fids = self.column("fid")
        return int(self.rows[int(np.nanargmin(fids))][0])


def build_dataset(config: TrainingConfig) -> ClassConditionalDataset:
    ds = make_dataset(config.dataset_spec())
    if config.subset_classes is not None:
        ds = subset(ds, config.subset_classes, config.subset_per_class, config.dataset_spec().seed)
    return ds


def evaluate(gen: GeneratorParams, lambda_eval: float, dataset: ClassConditionalDataset,
             n_fake_per_class: int, rng: np.random.Generator, step: int = 0,
             with_classwise: bool = False, return_samples: bool = False):
    """Generate ``n_fake_per_class`` samples per class at ``lambda_eval`` and score them."""
    if n_fake_per_class < 1:
        raise ValueError("n_fake_per_class must be >= 1")
    labels = np.repeat(np.arange(dataset.num_classes), n_fake_per_class)
    z = rng.standard_normal((labels.size, gen.style_layers[0][0].shape[0]))
    fake = generator_forward(gen, z, labels, lambda_eval).data
    # KID blocks are taken in order and both sets are sorted by class, so mix them first
    rp, fp = rng.permutation(len(dataset)), rng.permutation(labels.size)
    report = compute_report(FeatureSet(dataset.points[rp], dataset.labels[rp]),
                            FeatureSet(fake[fp], labels[fp]),
                            dataset, with_classwise=with_classwise, step=step)
    if return_samples:
        return report, fake, labels
    return report


def _state_to_bytes(rng: np.random.Generator) -> bytes:
    return json.dumps(rng.bit_generator.state, sort_keys=True).encode()


def _rng_from_bytes(blob: bytes) -> np.random.Generator:
    state = json.loads(blob.decode())
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


class Trainer:
    """One training run. Owns parameters, optimizer states and random streams."""

    def __init__(self, config: TrainingConfig, dataset: ClassConditionalDataset | None = None):
        self.config = config
        self.dataset = dataset if dataset is not None else build_dataset(config)
        if self.dataset.num_classes != config.effective_classes:
            raise ValueError(
                f"dataset has {self.dataset.num_classes} classes, config expects {config.effective_classes}")
        init_seed = int(config.stream_seed(STREAM_INIT).generate_state(1)[0])
        self.gen, self.disc = init_params(config.arch, init_seed)
        hyper = dict(learning_rate=config.lr, beta1=config.beta1, beta2=config.beta2)
        self.g_opt = AdamState.for_params(self.gen.tensors(), **hyper)
        self.d_opt = AdamState.for_params(self.disc.tensors(), **hyper)
        self.batch_rng = np.random.default_rng(config.stream_seed(STREAM_BATCH))
        self.latent_rng = np.random.default_rng(config.stream_seed(STREAM_LATENT))
        self.eval_rng = np.random.default_rng(config.stream_seed(STREAM_EVAL))
        self.step = 0
        self.log = MetricsLog()
        self.real_seen = 0
        self.embed_grad_step: int | None = None
        self.out_dir = Path(config.output_dir) if config.output_dir else None

    # ------------------------------------------------------------ one iteration

    def _d_update(self, lam_g: float, lam_l: float, form: str) -> float:
        cfg = self.config
        x, y = self._real_batch()
        z = self.latent_rng.standard_normal((cfg.batch_size, cfg.latent_dim))
        fake = generator_forward(self.gen, z, y, lam_g).data  # no active tape: constant
        d_params = self.disc.tensors()
        set_trainable(d_params, True)
        with Tape() as tape:
            real_out = discriminator_forward(self.disc, x, y)
            fake_out = discriminator_forward(self.disc, fake, y)
            terms = combined_losses((real_out.uncond, real_out.cond), (fake_out.uncond, fake_out.cond),
                                    lam_l, form)
            loss = terms.d_total
            if cfg.r1_weight > 0:
                loss = loss + r1_penalty(self.disc, x, cfg.r1_weight)
        backward(loss, tape)
        adam_step(d_params, [p.grad for p in d_params], self.d_opt)
        for p in d_params:
            p.zero_grad()
        return float(terms.d_total.data)

    def _real_batch(self):
        idx = self.batch_rng.integers(0, len(self.dataset), size=self.config.batch_size)
        self.real_seen += idx.size
        return self.dataset.points[idx], self.dataset.labels[idx]

    def _g_update(self, lam_g: float, lam_l: float, form: str) -> float:
        cfg = self.config
        z = self.latent_rng.standard_normal((cfg.batch_size, cfg.latent_dim))
        # generator labels follow the empirical label marginal without consuming real points
        y = self.dataset.labels[self.latent_rng.integers(0, len(self.dataset), size=cfg.batch_size)]
        d_params, g_params = self.disc.tensors(), self.gen.tensors()
        set_trainable(d_params, False)
        try:
            with Tape() as tape:
                fake = generator_forward(self.gen, z, y, lam_g)
                out = discriminator_forward(self.disc, fake, y)
                terms = combined_losses(None, (out.uncond, out.cond), lam_l, form)
            backward(terms.g_total, tape)
        finally:
            set_trainable(d_params, True)
        if self.embed_grad_step is None:
            eg = self.gen.class_embedding_table.grad
            if eg is not None and np.any(eg != 0.0):
                self.embed_grad_step = self.step
                log.info("class embedding receives nonzero gradient first at step %d", self.step)
        adam_step(g_params, [p.grad for p in g_params], self.g_opt)
        for p in g_params:
            p.zero_grad()
        return float(terms.g_total.data)

    def train_step(self) -> tuple[float, float, float]:
        self.step += 1
        t = self.step
        lam_g, lam_l, form = resolve_mode(self.config, t)
        # overflow is caught by the finiteness checks below and on the tape
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.config.d_steps_per_g_step):
                d_total = self._d_update(lam_g, lam_l, form)
            g_total = self._g_update(lam_g, lam_l, form)
        if not (math.isfinite(d_total) and math.isfinite(g_total)):
            raise FloatingPointError(f"non-finite loss at step {t}: d={d_total}, g={g_total}")
        return lam_g, d_total, g_total

    # ------------------------------------------------------------ loop

    def run(self, until: int | None = None) -> MetricsLog:
        cfg = self.config
        until = cfg.t_max if until is None else min(until, cfg.t_max)
        if self.out_dir is not None and self.step == 0:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "config.json").write_text(cfg.to_json())
        while self.step < until:
            try:
                lam, d_total, g_total = self.train_step()
            except FloatingPointError as exc:
                path = self._dump_checkpoint("abort")
                raise NumericalAbort(str(exc), self.step, path) from exc
            t = self.step
            if t % cfg.eval_every == 0 or t == cfg.t_max:
                rep, fake, labels = evaluate(self.gen, lam, self.dataset, cfg.fakes_per_class,
                                             self.eval_rng, step=t, return_samples=True)
                self.log.append((t, lam, d_total, g_total, rep.fid, rep.kid, rep.precision,
                                 rep.recall, rep.mode_coverage, rep.class_fidelity))
                log.debug("step %d lambda %.3f fid %.4f coverage %.3f fidelity %.3f",
                          t, lam, rep.fid, rep.mode_coverage, rep.class_fidelity)
            if self.out_dir is not None:
                if cfg.sample_dump_every and t % cfg.sample_dump_every == 0:
                    self._dump_samples(t, lam)
                if cfg.checkpoint_every and t % cfg.checkpoint_every == 0:
                    self._dump_checkpoint(f"step{t}")
        if self.out_dir is not None and self.step == cfg.t_max:
            self._write_outputs()
        return self.log

    # ------------------------------------------------------------ outputs

    def _dump_samples(self, t: int, lam: float) -> None:
        labels = np.repeat(np.arange(self.dataset.num_classes), self.config.fakes_per_class)
        rng = np.random.default_rng([self.config.seed, 1000 + t])
        z = rng.standard_normal((labels.size, self.config.latent_dim))
        fake = generator_forward(self.gen, z, labels, lam).data
        write_points_csv(self.out_dir / f"samples_step{t}.csv", fake, labels)

    def _dump_checkpoint(self, tag: str) -> Path | None:
        if self.out_dir is None:
            return None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / f"checkpoint_{tag}.ckpt"
        save_checkpoint(self.checkpoint(), path)
        return path

    def _write_outputs(self) -> None:
        (self.out_dir / "metrics.csv").write_text(self.log.to_csv())
        save_checkpoint(self.checkpoint(), self.out_dir / "checkpoint_final.ckpt")
        summary = {"final": self.log.final(), "best_fid_step": self.log.best_fid_step(),
                   "real_samples_seen": self.real_seen, "embed_grad_first_step": self.embed_grad_step,
                   "dataset_seed": self.config.dataset_spec().seed,
                   "dataset_total": len(self.dataset)}
        (self.out_dir / "summary.json").write_text(json.dumps(summary, indent=2))

    # ------------------------------------------------------------ checkpointing

    def checkpoint(self) -> CheckpointRecord:
        arrays: dict[str, np.ndarray] = {}
        for name, t in {**self.gen.named(), **self.disc.named()}.items():
            arrays[name] = t.data.copy()
        for tag, opt, params in (("G", self.g_opt, self.gen.named()), ("D", self.d_opt, self.disc.named())):
            for i, name in enumerate(params):
                arrays[f"adam{tag}.m.{name}"] = opt.first_moment[i].copy()
                arrays[f"adam{tag}.v.{name}"] = opt.second_moment[i].copy()
        arrays["log"] = self.log.as_array()
        blobs = {"rng.batch": _state_to_bytes(self.batch_rng),
                 "rng.latent": _state_to_bytes(self.latent_rng),
                 "rng.eval": _state_to_bytes(self.eval_rng)}
        meta = {"adamG.step": self.g_opt.step_count, "adamD.step": self.d_opt.step_count,
                "real_seen": self.real_seen, "embed_grad_step": self.embed_grad_step}
        return CheckpointRecord(self.config.to_dict(), self.step, arrays, blobs, meta)

    @classmethod
    def from_checkpoint(cls, record: CheckpointRecord | str | Path, **overrides) -> "Trainer":
        if not isinstance(record, CheckpointRecord):
            record = load_checkpoint(record)
        config = TrainingConfig.from_dict(record.config).override(**overrides)
        tr = cls(config)
        for name, t in {**tr.gen.named(), **tr.disc.named()}.items():
            t.data = record.arrays[name].copy()
        for tag, opt, params in (("G", tr.g_opt, tr.gen.named()), ("D", tr.d_opt, tr.disc.named())):
            opt.first_moment = [record.arrays[f"adam{tag}.m.{n}"].copy() for n in params]
            opt.second_moment = [record.arrays[f"adam{tag}.v.{n}"].copy() for n in params]
        tr.g_opt.step_count = record.meta["adamG.step"]
        tr.d_opt.step_count = record.meta["adamD.step"]
        tr.batch_rng = _rng_from_bytes(record.blobs["rng.batch"])
        tr.latent_rng = _rng_from_bytes(record.blobs["rng.latent"])
        tr.eval_rng = _rng_from_bytes(record.blobs["rng.eval"])
        tr.log = MetricsLog.from_array(record.arrays["log"])
        tr.real_seen = record.meta["real_seen"]
        tr.embed_grad_step = record.meta["embed_grad_step"]
        tr.step = record.step
        return tr


def train(config: TrainingConfig, dataset: ClassConditionalDataset | None = None) -> Trainer:
    """Run ``config`` to completion; returns the trainer (log, params, checkpoint())."""
    tr = Trainer(config, dataset)
    tr.run()
    return tr


def final_report(trainer: Trainer) -> MetricsReport:
    row = trainer.log.final()
    return MetricsReport(step=int(row["step"]), fid=row["fid"], kid=row["kid"], precision=row["precision"],
                         recall=row["recall"], mode_coverage=row["mode_coverage"],
                         class_fidelity=row["class_fidelity"])
