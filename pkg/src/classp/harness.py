"""Run a task sequence with one optimizer and score accuracy and forgetting.

Each repeat ``r`` derives three independent PCG32 streams from
``seed + r``: weight initialization, per-epoch shuffling, and Fisher
sampling.  Arms that share a seed therefore start from the same weights
and see batches in the same order, which is what paired comparisons need.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, TaskSequence
from .errors import NumericError
from .mlp import MLPParams, cross_entropy_loss, init_mlp, mlp_backward, mlp_forward, predict
from .numeric import Pcg32
from .optim import Optimizer, make_optimizer, update_sparsity  # noqa: F401  (re-export)

log = logging.getLogger(__name__)

INIT_STREAM, SHUFFLE_STREAM, FISHER_STREAM = 1, 2, 3


def accuracy(params: MLPParams, d: Dataset) -> float:
    if len(d) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return 100.0 * float(np.mean(predict(params, d.x) == d.y))


def forgetting_rate(acc_initial: float, acc_final: float) -> float:
    """Relative drop in first-task accuracy, in percent."""
    if not acc_initial > 0:
        raise ValueError("initial accuracy must be positive")
    return 100.0 * (acc_initial - acc_final) / acc_initial


@dataclass
class RunConfig:
    layers: tuple
    tasks: TaskSequence
    optimizer: str = "classp"
    optimizer_args: dict = field(default_factory=dict)
    seed: int = 0
    repeat_count: int = 1

    def __post_init__(self):
        if self.repeat_count < 1:
            raise ValueError("repeat_count must be >= 1")
        self.layers = tuple(int(s) for s in self.layers)
        if self.layers[0] != self.tasks.features or self.layers[-1] != self.tasks.num_classes:
            raise ValueError(
                f"layers {self.layers} do not fit {self.tasks.features} features / "
                f"{self.tasks.num_classes} classes"
            )
        make_optimizer(self.optimizer, 0, **self.optimizer_args)  # validate early


@dataclass
class PhaseReport:
    phase: int
    accuracy: dict
    updated_fraction: float
    aux_memory: int
    epochs_run: int
    train_loss: float


@dataclass
class ForgettingReport:
    acc_initial: float
    acc_final: float
    forgetting_rate: Optional[float]


@dataclass
class RepeatResult:
    seed: int
    phases: list
    forgetting: ForgettingReport
    params: Optional[MLPParams] = field(default=None, repr=False)

    @property
    def retention(self) -> float:
        """Final accuracy on the first eval set."""
        return self.forgetting.acc_final


@dataclass
class RunResult:
    config: RunConfig
    repeats: list

    def aggregate(self) -> dict:
        return aggregate(self.repeats)


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std())}  # population std (n divisor)


def aggregate(repeats) -> dict:
    """Mean and population std of every metric across repeats."""
    out = {"phases": [], "forgetting_rate": None, "retention": None}
    for k in range(len(repeats[0].phases)):
        reps = [r.phases[k] for r in repeats]
        out["phases"].append({
            "phase": k,
            "accuracy": {name: _mean_std([p.accuracy[name] for p in reps]) for name in reps[0].accuracy},
            "updated_fraction": _mean_std([p.updated_fraction for p in reps]),
            "aux_memory": _mean_std([p.aux_memory for p in reps]),
        })
    rates = [r.forgetting.forgetting_rate for r in repeats]
    if all(x is not None for x in rates):
        out["forgetting_rate"] = _mean_std(rates)
    out["retention"] = _mean_std([r.retention for r in repeats])
    return out


def train_phase(params: MLPParams, opt: Optimizer, phase, shuffle_rng: Pcg32) -> tuple[int, float]:
    """Mini-batch training for one phase; returns (epochs run, last epoch-mean loss)."""
    d = phase.dataset
    n = len(d)
    mean_loss = math.nan
    epoch = 0
    for epoch in range(1, phase.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, phase.batch_size):
            idx = order[start : start + phase.batch_size]
            logits, cache = mlp_forward(params, d.x[idx])
            loss, dlogits = cross_entropy_loss(logits, d.y[idx])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            grads = mlp_backward(params, cache, dlogits)
            try:
                opt.step(params.flat, grads.flat)
            except NumericError as e:
                raise NumericError(f"epoch {epoch}, batch starting {start}: {e}") from e
            total += loss * len(idx)
        mean_loss = total / n
        if phase.loss_stop is not None and mean_loss <= phase.loss_stop:
            log.debug("loss %.4f <= %.4f, stopping phase after epoch %d", mean_loss, phase.loss_stop, epoch)
            break
    return epoch, mean_loss


def run_repeat(cfg: RunConfig, seed: int, keep_params: bool = False) -> RepeatResult:
    params = init_mlp(cfg.layers, Pcg32(seed, INIT_STREAM))
    shuffle_rng = Pcg32(seed, SHUFFLE_STREAM)
    fisher_rng = Pcg32(seed, FISHER_STREAM)
    opt = make_optimizer(cfg.optimizer, len(params), **cfg.optimizer_args)

    reports = []
    for k, phase in enumerate(cfg.tasks.phases):
        opt.set_phase(threshold=phase.threshold, apply_decay=phase.apply_decay)
        try:
            epochs_run, loss = train_phase(params, opt, phase, shuffle_rng)
        except NumericError as e:
            raise NumericError(f"seed {seed}, phase {k}: {e}") from e
        opt.end_task(params, phase.dataset, fisher_rng)
        accs = {d.name: accuracy(params, d) for d in cfg.tasks.eval_sets}
        reports.append(PhaseReport(k, accs, opt.updated_fraction(), opt.aux_memory, epochs_run, loss))
        log.info("seed %d phase %d: %s", seed, k, {n: round(a, 2) for n, a in accs.items()})

    first = cfg.tasks.eval_sets[0].name
    a0, a1 = reports[0].accuracy[first], reports[-1].accuracy[first]
    rate = forgetting_rate(a0, a1) if a0 > 0 else None
    return RepeatResult(seed, reports, ForgettingReport(a0, a1, rate), params if keep_params else None)


def run_sequence(cfg: RunConfig, keep_params: bool = False) -> RunResult:
    repeats = [run_repeat(cfg, cfg.seed + r, keep_params) for r in range(cfg.repeat_count)]
    return RunResult(cfg, repeats)
