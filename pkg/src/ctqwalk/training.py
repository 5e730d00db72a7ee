"""Ten-fold cross-validation training with Adam and early stopping.

Folds are independent; each trains its own parameter copy with
mini-batch Adam (per-graph gradients summed, then averaged per batch),
monitors inner-validation accuracy every epoch, retains the best
checkpoint and evaluates it once on the held-out test fold.
"""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .data import Dataset, FoldPlan, make_folds
from .errors import ConfigError, NumericError
from .optim import AdamState, adam_step
from .tensor import CounterRng, backward, no_grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 0.001
    batch_size: int = 32
    patience: int = 30
    seed: int = 0
    val_fraction: float = 0.1
    model: M.ModelConfig = field(default_factory=M.ModelConfig)

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.patience < 0 or self.patience > self.epochs:
            raise ConfigError("need 0 <= patience <= epochs")
        self.model.validate()

    def snapshot(self) -> dict:
        out = dataclasses.asdict(self)
        return out


@dataclass
class CVResult:
    fold_accuracies: list[float]
    mean: float
    std: float
    seconds: float
    config: dict

    @classmethod
    def from_folds(cls, accs: list[float], seconds: float, config: dict) -> "CVResult":
        arr = np.asarray(accs, dtype=np.float64)
        return cls(fold_accuracies=[float(a) for a in accs],
                   mean=float(arr.mean()), std=float(arr.std()),
                   seconds=float(seconds), config=config)

    def validate(self) -> None:
        arr = np.asarray(self.fold_accuracies, dtype=np.float64)
        if any(not (0.0 <= a <= 1.0) for a in self.fold_accuracies):
            raise ConfigError("fold accuracies must lie in [0, 1]")
        if abs(arr.mean() - self.mean) > 1e-12 or abs(arr.std() - self.std) > 1e-12:
            raise ConfigError("stored mean/std do not match the fold list")


def fold_seed(master: int, fold_index: int) -> int:
    return int(np.random.SeedSequence([master, fold_index, 0x7a1e]).generate_state(1)[0])


def evaluate_accuracy(dataset: Dataset, indices, params: M.ModelParams,
                      config: M.ModelConfig) -> float:
    if len(indices) == 0:
        raise ConfigError("cannot evaluate on an empty index list")
    correct = sum(1 for i in indices
                  if M.predict(dataset.graphs[i], params, config) == dataset.graphs[i].label)
    return correct / len(indices)


def train_fold(dataset: Dataset, fold_index: int, plan: FoldPlan,
               config: TrainConfig) -> tuple[dict, float]:
    """Train one fold; returns (best parameter values, test accuracy)."""
    config.validate()
    n = len(dataset.graphs)
    test_idx = plan.folds[fold_index]
    val_idx = plan.inner_val[fold_index]
    train_idx = plan.train_indices(fold_index, n)
    if not train_idx or not val_idx or not test_idx:
        raise ConfigError(
            f"fold {fold_index} has an empty split "
            f"(train={len(train_idx)}, val={len(val_idx)}, test={len(test_idx)})")

    seed = fold_seed(config.seed, fold_index)
    params = M.init_params(config.model, seed)
    named = params.named()
    state = AdamState(lr=config.lr)
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    dropout_rng = CounterRng(seed)

    best_val = -1.0
    best_values = params.copy_values()
    stale = 0
    order = np.array(train_idx)

    for epoch in range(config.epochs):
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            for _, p in named:
                p.zero_grad()
            batch_loss = 0.0
            for i in batch:
                g = dataset.graphs[int(i)]
                logits = M.forward(g, params, config.model, train=True, rng=dropout_rng)
                graph_loss = M.loss(logits, g.label)
                batch_loss += graph_loss.item()
                backward(graph_loss)
            for _, p in named:
                if p._grad is not None:
                    p._grad /= len(batch)
            adam_step(named, state)
            epoch_loss += batch_loss
        if not math.isfinite(epoch_loss):
            raise NumericError(
                f"training loss became non-finite at epoch {epoch + 1} (training stage)")

        val_acc = evaluate_accuracy(dataset, val_idx, params, config.model)
        if val_acc > best_val:
            best_val = val_acc
            best_values = params.copy_values()
            stale = 0
        else:
            stale += 1
        if stale >= config.patience:
            break

    params.load_values(best_values)
    test_acc = evaluate_accuracy(dataset, test_idx, params, config.model)
    return best_values, test_acc


def _fold_worker(args) -> tuple[int, float]:
    dataset, fold_index, plan, config = args
    _, acc = train_fold(dataset, fold_index, plan, config)
    return fold_index, acc


def cross_validate(dataset: Dataset, config: TrainConfig, folds: int = 10,
                   threads: int = 1, log=None) -> CVResult:
    """Stratified k-fold cross-validation; deterministic for a fixed seed."""
    config.validate()
    plan = make_folds(dataset, k=folds, val_fraction=config.val_fraction,
                      seed=config.seed)
    started = time.perf_counter()
    accs = [0.0] * folds
    if threads > 1:
        jobs = [(dataset, f, plan, config) for f in range(folds)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for fold_index, acc in pool.map(_fold_worker, jobs):
                accs[fold_index] = acc
                if log:
                    log(f"fold {fold_index}: accuracy {acc:.4f}")
    else:
        for f in range(folds):
            _, accs[f] = train_fold(dataset, f, plan, config)
            if log:
                log(f"fold {f}: accuracy {accs[f]:.4f}")
    seconds = time.perf_counter() - started
    result = CVResult.from_folds(accs, seconds, config.snapshot())
    result.validate()
    return result


def run_ablation(dataset: Dataset, config: TrainConfig, which: str,
                 folds: int = 10, threads: int = 1, log=None) -> CVResult:
    ablated = dataclasses.replace(config, model=M.ablate(config.model, which))
    result = cross_validate(dataset, ablated, folds=folds, threads=threads, log=log)
    result.config["ablation"] = which
    return result


def sweep(dataset: Dataset, config: TrainConfig, grid: dict[str, list],
          folds: int = 10, threads: int = 1, log=None) -> list[CVResult]:
    """One cross-validation per grid point; grid maps one ModelConfig field
    ('time_steps' or 'layers') to its value list."""
    if len(grid) != 1:
        raise ConfigError(f"sweep expects exactly one grid axis, got {sorted(grid)}")
    (param, values), = grid.items()
    if param not in ("time_steps", "layers"):
        raise ConfigError(f"unsupported sweep parameter {param!r}")
    results = []
    for v in values:
        point = dataclasses.replace(
            config, model=dataclasses.replace(config.model, **{param: int(v)}))
        if log:
            log(f"sweep {param}={v}")
        res = cross_validate(dataset, point, folds=folds, threads=threads, log=log)
        res.config["sweep"] = {param: int(v)}
        results.append(res)
    return results
