"""Two-stage fine-tuning schedule: linear warmup followed by cosine decay,
plus the optimizer settings that go with it."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError


@dataclass(frozen=True)
class OptimizerConfig:
    eps: float = 1e-8
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.1
    grad_clip: float = 5.0

    def __post_init__(self):
        b1, b2 = self.betas
        if self.eps <= 0 or not 0 < b1 < b2 < 1 or self.grad_clip <= 0:
            raise ParameterError("invalid optimizer configuration")

    def header(self) -> str:
        b1, b2 = self.betas
        return (f"# optimizer=AdamW eps={self.eps!r} betas=({b1!r},{b2!r}) "
                f"weight_decay={self.weight_decay!r} grad_clip={self.grad_clip!r}")


@dataclass(frozen=True)
class StageSchedule:
    base_lr: float
    warmup_lr: float
    min_lr: float
    total_epochs: int
    steps_per_epoch: int = 1
    warmup_epochs: int = 5

    def __post_init__(self):
        if min(self.base_lr, self.warmup_lr, self.min_lr) <= 0:
            raise ParameterError("learning rates must be positive")
        if self.warmup_lr > self.base_lr or self.min_lr > self.base_lr:
            raise ParameterError("warmup_lr and min_lr must not exceed base_lr")
        if self.steps_per_epoch < 1:
            raise ParameterError("steps_per_epoch must be >= 1")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ParameterError("warmup_epochs must be smaller than total_epochs")

    @property
    def warmup_steps(self) -> int:
        return self.warmup_epochs * self.steps_per_epoch

    @property
    def total_steps(self) -> int:
        return self.total_epochs * self.steps_per_epoch


def stage_one(total_epochs: int = 35, steps_per_epoch: int = 1) -> StageSchedule:
    return StageSchedule(5e-5, 5e-8, 5e-7, total_epochs, steps_per_epoch)


def stage_two(total_epochs: int = 15, steps_per_epoch: int = 1) -> StageSchedule:
    return StageSchedule(5e-6, 5e-9, 5e-9, total_epochs, steps_per_epoch)


def lr_at(sched: StageSchedule, step: int) -> float:
    if not 0 <= step <= sched.total_steps:
        raise ParameterError(f"step {step} outside [0, {sched.total_steps}]")
    warm = sched.warmup_steps
    if step < warm:
        return sched.warmup_lr + (sched.base_lr - sched.warmup_lr) * step / warm
    progress = (step - warm) / (sched.total_steps - warm)
    return sched.min_lr + 0.5 * (sched.base_lr - sched.min_lr) * (1.0 + math.cos(math.pi * progress))


def clip_gradient_norm(grads, max_norm: float) -> np.ndarray:
    """Rescale ``grads`` so its L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ParameterError("max_norm must be positive")
    g = np.asarray(grads, dtype=np.float64)
    if not np.isfinite(g).all():
        raise NumericError("non-finite gradient entry")
    norm = float(np.linalg.norm(g))
    if norm <= max_norm:
        return g.copy()
    return g * (max_norm / norm)


@dataclass
class ScheduleRow:
    stage: int
    epoch: int
    step: int
    lr: float


def emit_schedule(stage1: StageSchedule, stage2: StageSchedule) -> list:
    """Per-step rows for both stages; each stage covers steps
    ``0..total_steps`` inclusive and restarts its own warmup."""
    rows = []
    for stage_no, sched in ((1, stage1), (2, stage2)):
        for step in range(sched.total_steps + 1):
            rows.append(ScheduleRow(stage_no, step // sched.steps_per_epoch, step,
                                    lr_at(sched, step)))
    return rows


def write_schedule_csv(path, rows, optimizer: OptimizerConfig | None = None):
    optimizer = optimizer or OptimizerConfig()
    with open(path, "w", newline="") as fh:
        fh.write(optimizer.header() + "\n")
        w = csv.writer(fh)
        w.writerow(["stage", "epoch", "step", "lr"])
        for r in rows:
            w.writerow([r.stage, r.epoch, r.step, repr(r.lr)])


def read_schedule_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return [ScheduleRow(int(r["stage"]), int(r["epoch"]), int(r["step"]), float(r["lr"]))
            for r in reader]
