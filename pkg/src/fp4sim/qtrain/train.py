"""Seeded training loop with AdamW, warm-up + cosine schedule and divergence detection."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..formats import NonFiniteError
from .layers import QuantLinearConfig
from .model import ModelDims, build_toy_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainRun:
    seed: int = 0
    dims: ModelDims = field(default_factory=ModelDims)
    steps: int = 2000
    batch: int = 8
    peak_lr: float = 3e-3
    warmup_frac: float = 0.05
    final_lr_frac: float = 0.1
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.95
    adam_eps: float = 1e-8
    grad_clip: float = 1.0  # global norm; 0 disables
    quant: QuantLinearConfig = field(default_factory=QuantLinearConfig)
    loss_curve: tuple = ()
    diverged: bool = False

    def final_loss(self, window: int = 100) -> float:
        if self.diverged or not self.loss_curve:
            return math.nan
        tail = [loss for _, loss in self.loss_curve[-window:]]
        return float(np.mean(tail))


def lr_at(step: int, run: TrainRun) -> float:
    """Linear warm-up over warmup_frac of the steps, then cosine down to final_lr_frac * peak."""
    warm = max(1, int(round(run.warmup_frac * run.steps)))
    if step < warm:
        return run.peak_lr * (step + 1) / warm
    span = max(1, run.steps - warm)
    progress = min(1.0, (step - warm) / span)
    floor = run.final_lr_frac
    return run.peak_lr * (floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress)))


class AdamW:
    def __init__(self, model, run: TrainRun):
        self.entries = list(model.named_parameters())
        self.m = {name: np.zeros_like(mod.params[k]) for name, mod, k in self.entries}
        self.v = {name: np.zeros_like(mod.params[k]) for name, mod, k in self.entries}
        self.run = run
        self.t = 0

    def grad_norm(self) -> float:
        return math.sqrt(sum(float(np.dot(mod.grads[k].ravel(), mod.grads[k].ravel()))
                             for _, mod, k in self.entries))

    def step(self, lr: float, clip_coef: float = 1.0):
        r = self.run
        self.t += 1
        bc1 = 1.0 - r.beta1 ** self.t
        bc2 = 1.0 - r.beta2 ** self.t
        for name, mod, k in self.entries:
            p, g = mod.params[k], mod.grads[k] * clip_coef
            m, v = self.m[name], self.v[name]
            m *= r.beta1
            m += (1.0 - r.beta1) * g
            v *= r.beta2
            v += (1.0 - r.beta2) * g * g
            if p.ndim == 2 and r.weight_decay:  # decay matrices only
                p *= 1.0 - lr * r.weight_decay
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + r.adam_eps)


def train(run: TrainRun, dataset, progress: int = 0) -> TrainRun:
    """Run ``run.steps`` optimizer steps and return a copy of ``run`` with its loss curve.

    A NaN/Inf in the loss, logits or gradients stops the run with ``diverged`` set.
    """
    rng = np.random.default_rng([run.seed, 1])
    model = build_toy_model(run.dims, run.quant, seed=run.seed)
    opt = AdamW(model, run)
    curve = []
    diverged = False
    for step in range(run.steps):
        tokens, targets = dataset.sample(rng, run.batch)
        model.zero_grad_all()
        try:
            with np.errstate(over="raise", invalid="raise"):
                loss = model.loss_and_backward(tokens, targets)
        except (NonFiniteError, FloatingPointError) as exc:
            log.warning("step %d: run diverged (%s)", step, exc)
            diverged = True
            break
        gnorm = opt.grad_norm()
        if not (math.isfinite(loss) and math.isfinite(gnorm)):
            diverged = True
            break
        coef = 1.0
        if run.grad_clip and gnorm > run.grad_clip:
            coef = run.grad_clip / gnorm
        opt.step(lr_at(step, run), coef)
        curve.append((step, loss))
        if progress and (step + 1) % progress == 0:
            log.info("step %d loss %.4f", step + 1, loss)
    return replace(run, loss_curve=tuple(curve), diverged=diverged)


def loss_curve_csv(run: TrainRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for step, loss in run.loss_curve:
        w.writerow([step, repr(float(loss))])
    return buf.getvalue()
