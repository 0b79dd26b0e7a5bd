"""L1/Adam training with step-halving learning rate, ablations and K sweeps."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError, NumericError
from .lightfield.patches import augment as augment_pair
from .lightfield.resample import bicubic_resize
from .metrics import MetricReport, evaluate_many
from .model import ABLATIONS, DptConfig, DptModel, count_params
from .rng import stream
from .tensor import no_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 2e-4
    halve_every: int = 15
    epochs: int = 75
    batch: int = 8
    seed: int = 0
    alpha: int = 2
    patch: int = 64
    max_steps: int | None = None
    augment: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch < 1 or self.epochs < 0 or self.halve_every < 1:
            raise ConfigurationError("batch and halve_every must be positive, epochs >= 0")


def lr_at(epoch: int, lr0: float = 2e-4, halve_every: int = 15) -> float:
    return lr0 * 0.5 ** (epoch // halve_every)


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, modifying ``params`` and ``state`` in place."""
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise DimensionError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class TrainResult:
    model: DptModel
    epoch_losses: list[float]
    # (step, epoch, lr, loss) per optimizer step
    steps: list[tuple[int, int, float, float]]
    state: AdamState


def train(model: DptModel, dataset: Sequence[tuple[np.ndarray, np.ndarray]],
          config: TrainConfig,
          on_step: Callable[[int, int, float, float], None] | None = None) -> TrainResult:
    """Optimise ``model`` on (HR, LR) patch pairs.

    An epoch is one pass over ``dataset`` in a seeded shuffled order; each
    optimizer step averages the L1 loss of up to ``batch`` pairs.
    """
    if len(dataset) == 0:
        raise ConfigurationError("empty dataset")
    params = model.parameters()
    state = AdamState()
    shuffle_rng = stream(config.seed, "shuffle")
    aug_rng = stream(config.seed, "augment")
    epoch_losses, steps = [], []
    step = 0
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config.lr0, config.halve_every)
        order = shuffle_rng.permutation(len(dataset))
        batch_losses = []
        for start in range(0, len(order), config.batch):
            idx = order[start:start + config.batch]
            model.zero_grad()
            total = 0.0
            for i in idx:
                hr, lr_field = dataset[i]
                if config.augment:
                    hr, lr_field = augment_pair((hr, lr_field), aug_rng)
                loss = T.scale(T.l1_loss(model(lr_field), hr), 1.0 / len(idx))
                loss.backward()
                total += loss.item()
            if not np.isfinite(total):
                raise NumericError(f"loss became non-finite at step {step}")
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            adam_step([p.data for p in params], grads, state, lr,
                      config.beta1, config.beta2, config.eps)
            steps.append((step, epoch, lr, total))
            batch_losses.append(total)
            if on_step is not None:
                on_step(step, epoch, lr, total)
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                break
        epoch_losses.append(float(np.mean(batch_losses)))
        log.info("epoch %d lr %.3g loss %.6f", epoch, lr, epoch_losses[-1])
        if config.max_steps is not None and step >= config.max_steps:
            break
    return TrainResult(model, epoch_losses, steps, state)


def predict(model: DptModel, lr_field: np.ndarray) -> np.ndarray:
    with no_grad():
        return model(lr_field).data


def evaluate_model(model: DptModel, dataset) -> MetricReport:
    preds = [predict(model, lr) for _, lr in dataset]
    return evaluate_many(preds, [hr for hr, _ in dataset])


def evaluate_bicubic(dataset, alpha: int) -> MetricReport:
    preds = [bicubic_resize(lr, alpha) for _, lr in dataset]
    return evaluate_many(preds, [hr for hr, _ in dataset])


@dataclass
class VariantResult:
    name: str
    params: int
    report: MetricReport
    final_loss: float


def run_ablation(variants: Sequence[str], train_set, eval_set, model_config: DptConfig,
                 config: TrainConfig) -> list[VariantResult]:
    """Train and evaluate each ablation variant with the same seed and data."""
    unknown = [v for v in variants if v not in ABLATIONS]
    if unknown:
        raise ConfigurationError(f"unknown variants {unknown}; choose from {ABLATIONS}")
    results = []
    for name in variants:
        cfg = dataclasses.replace(model_config, ablation=name)
        model = DptModel(cfg, seed=config.seed)
        res = train(model, train_set, config)
        results.append(VariantResult(name, count_params(model), evaluate_model(model, eval_set),
                                     res.steps[-1][3] if res.steps else float("nan")))
    return results


def sweep_k(values: Sequence[int], train_set, eval_set, model_config: DptConfig,
            config: TrainConfig) -> list[VariantResult]:
    """One row per K, each trained from the same seed on the same data."""
    bad = [k for k in values if k not in (1, 2, 3, 4)]
    if bad:
        raise ConfigurationError(f"K values must lie in 1..4, got {bad}")
    results = []
    for k in values:
        model = DptModel(dataclasses.replace(model_config, k=k), seed=config.seed)
        res = train(model, train_set, config)
        results.append(VariantResult(f"K={k}", count_params(model),
                                     evaluate_model(model, eval_set),
                                     res.steps[-1][3] if res.steps else float("nan")))
    return results
