"""Independent runs over one config axis x seeds, merged into a tidy table."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..autodiff import ContractError
from .config import TrainingConfig
from .train import Trainer

log = logging.getLogger(__name__)

AXES = ("num_classes", "samples_per_class", "t_start", "t_end")
SWEEP_COLUMNS = ("axis", "value", "seed", "mode", "status", "step", "lambda", "fid", "kid",
                 "precision", "recall", "mode_coverage", "class_fidelity", "dataset_total")


def config_for(base: TrainingConfig, axis: str, value: int, seed: int) -> TrainingConfig:
    """Apply one sweep point. Moving ``t_start`` keeps the transition duration fixed."""
    if axis not in AXES:
        raise ContractError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    changes = {axis: int(value), "seed": int(seed)}
    if axis == "t_start":
        changes["t_end"] = int(value) + (base.t_end - base.t_start)
    if base.output_dir:
        changes["output_dir"] = str(Path(base.output_dir) / f"{axis}={value}" / f"seed={seed}")
    return base.override(**changes)


def _run_one(args) -> dict:
    base, axis, value, seed = args
    row = {"axis": axis, "value": value, "seed": seed, "mode": base.mode}
    try:
        cfg = config_for(base, axis, value, seed)
        tr = Trainer(cfg)
        tr.run()
        final = tr.log.final()
        row.update(status="ok", dataset_total=len(tr.dataset), **final)
    except Exception as exc:  # a failed point is reported, not fatal
        log.warning("sweep point %s=%s seed=%s failed: %s", axis, value, seed, exc)
        row.update(status=f"error: {type(exc).__name__}: {exc}")
    return row


def sweep(base: TrainingConfig, axis: str, values, seeds, jobs: int = 1) -> list[dict]:
    values, seeds = list(values), list(seeds)
    if not values:
        raise ContractError("sweep needs at least one value")
    if not seeds:
        raise ContractError("sweep needs at least one seed")
    if axis not in AXES:
        raise ContractError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    tasks = [(base, axis, v, s) for v in values for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, tasks))
    else:
        rows = [_run_one(t) for t in tasks]
    rows.sort(key=lambda r: (r["value"], r["seed"]))
    if base.output_dir:
        Path(base.output_dir).mkdir(parents=True, exist_ok=True)
        (Path(base.output_dir) / f"sweep_{axis}.csv").write_text(rows_to_csv(rows))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in SWEEP_COLUMNS})
    return buf.getvalue()
