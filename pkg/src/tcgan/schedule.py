"""Linear unconditional-to-conditional transition weight."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransitionSchedule:
    """Ramp from 0 at ``t_start`` to ``clip_max`` at ``t_end``; training stops at ``t_max``.

    ``t_start`` may be negative and ``t_end`` may exceed ``t_max``. Such
    degenerate schedules pin the weight to a constant over the whole run and
    are how the pure unconditional / conditional regimes are reproduced.
    """

    t_start: int = 1000
    t_end: int = 2000
    t_max: int = 6000
    clip_max: float = 1.0

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"t_start ({self.t_start}) must be < t_end ({self.t_end})")
        if not 0.0 < self.clip_max <= 1.0:
            raise ValueError(f"clip_max must be in (0, 1], got {self.clip_max}")
        if self.t_max < 0:
            raise ValueError(f"t_max must be >= 0, got {self.t_max}")
        if self.t_end > self.t_max or self.t_start < 0:
            log.debug("degenerate schedule %s: weight is constant over [0, t_max]", self)

    def lambda_at(self, t: int) -> float:
        if t < 0:
            raise ValueError(f"iteration must be >= 0, got {t}")
        if t <= self.t_start:
            return 0.0
        if t >= self.t_end:
            return self.clip_max
        return min((t - self.t_start) / (self.t_end - self.t_start), self.clip_max)


def lambda_at(schedule: TransitionSchedule, t: int) -> float:
    return schedule.lambda_at(t)


def emit_schedule_curve(schedule: TransitionSchedule, step_stride: int) -> list[tuple[int, float]]:
    """Rows ``(t, lambda)`` for t = 0, stride, 2*stride, ... up to t_max (always included)."""
    if step_stride < 1:
        raise ValueError(f"stride must be >= 1, got {step_stride}")
    ts = list(range(0, schedule.t_max + 1, step_stride))
    if ts[-1] != schedule.t_max:
        ts.append(schedule.t_max)
    return [(t, schedule.lambda_at(t)) for t in ts]


def curve_to_csv(rows: list[tuple[int, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "lambda"])
    for t, lam in rows:
        writer.writerow([t, repr(lam)])
    return buf.getvalue()
