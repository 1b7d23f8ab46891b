"""Optimization loop and metrics: squared-error loss (with an MAE
switch), percentage error with a protective floor, AdamW with a halving
learning-rate schedule, the 9/2/2 year split, and best-validation-epoch
model selection."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ShapeError, TrainingError
from .data import StationDataset, build_task, pair_index, parse_task, task_label
from .tensor import Tape, Tensor, absolute, add, backward, mul, scalar_mul, sum_all

__all__ = [
    "Split",
    "split_years",
    "Standardizer",
    "mse_loss",
    "mae_loss",
    "mape",
    "AdamW",
    "adamw_step",
    "lr_at",
    "TrainReport",
    "train",
]


@dataclass(frozen=True)
class Split:
    """Disjoint 9/2/2 year partition covering all 13 years."""

    train_years: tuple[int, ...]
    val_years: tuple[int, ...]
    test_years: tuple[int, ...]
    seed: int

    def __post_init__(self):
        tr, va, te = set(self.train_years), set(self.val_years), set(self.test_years)
        if len(self.train_years) != 9 or len(self.val_years) != 2 \
                or len(self.test_years) != 2:
            raise ContractError(
                f"split sizes must be 9/2/2, got "
                f"{len(self.train_years)}/{len(self.val_years)}/{len(self.test_years)}"
            )
        if len(tr | va | te) != 13 or (tr & va) or (tr & te) or (va & te):
            raise ContractError("split years must be disjoint and cover all 13")


def split_years(years, seed: int) -> Split:
    """Seeded shuffle of exactly 13 distinct years into 9/2/2."""
    years = [int(y) for y in years]
    if len(years) != 13 or len(set(years)) != 13:
        raise ContractError(
            f"need exactly 13 distinct years, got {len(years)} "
            f"({len(set(years))} distinct)"
        )
    order = np.random.default_rng(seed).permutation(13)
    shuffled = [years[i] for i in order]
    return Split(
        train_years=tuple(sorted(shuffled[0:9])),
        val_years=tuple(sorted(shuffled[9:11])),
        test_years=tuple(sorted(shuffled[11:13])),
        seed=int(seed),
    )


class Standardizer:
    """Columnwise (x - mean) / std with a zero-variance guard."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(1, -1)
        self.std = np.asarray(std, dtype=np.float64).reshape(1, -1)

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0, keepdims=True)
        std[std < 1e-12] = 1.0
        return cls(x.mean(axis=0, keepdims=True), std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


def _check_pair(pred: Tensor, truth: Tensor, op: str) -> None:
    if pred.shape != truth.shape:
        raise ShapeError(
            f"{op} needs equal shapes, got {pred.shape} and {truth.shape}"
        )


def mse_loss(pred: Tensor, truth: Tensor) -> Tensor:
    """(1/n) * sum((pred - truth)^2) over all entries."""
    _check_pair(pred, truth, "mse_loss")
    diff = add(pred, scalar_mul(-1.0, truth))
    return scalar_mul(1.0 / pred.values.size, sum_all(mul(diff, diff)))


def mae_loss(pred: Tensor, truth: Tensor) -> Tensor:
    """(1/n) * sum(|pred - truth|) over all entries."""
    _check_pair(pred, truth, "mae_loss")
    diff = add(pred, scalar_mul(-1.0, truth))
    return scalar_mul(1.0 / pred.values.size, sum_all(absolute(diff)))


_LOSSES = {"mse": mse_loss, "mae": mae_loss}


def mape(pred, truth, floor: float = 1.0) -> float:
    """Mean |pred - truth| / max(truth, floor), as a percentage."""
    p = pred.values if isinstance(pred, Tensor) else np.asarray(pred, dtype=np.float64)
    t = truth.values if isinstance(truth, Tensor) else np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"mape needs equal shapes, got {p.shape} and {t.shape}")
    return float(np.mean(np.abs(p - t) / np.maximum(t, floor)) * 100.0)


class AdamW:
    """Decoupled-weight-decay Adam over a fixed parameter list."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        adamw_step(self.params, [p.grad for p in self.params], self, lr)


def adamw_step(params, grads, state: AdamW, lr: float) -> None:
    """One update: theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps)
    + weight_decay * theta), with bias-corrected moments."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.values
        p.values -= lr * update


def lr_at(epoch: int, base: float = 0.005, ratio: float = 0.5,
          interval: int = 200) -> float:
    """base * ratio^floor(epoch / interval)."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return base * ratio ** (epoch // interval)


@dataclass
class TrainReport:
    """One training run's trajectory and outcome.

    Index i of the curves corresponds to i optimizer updates applied;
    index 0 is the initialization. best_epoch is the index with the
    lowest validation MAPE (earliest wins ties); test MAPE is computed
    once, on the parameters restored from that index.
    """

    variant: str
    k: int
    task: str
    seed: int
    train_loss: list[float]
    val_mape: list[float]
    best_epoch: int
    best_val_mape: float
    test_mape: float
    config: object = field(repr=False)

    @staticmethod
    def csv_header() -> str:
        return "variant,k,task,seed,best_val_mape,test_mape,best_epoch"

    def csv_row(self) -> str:
        return (f"{self.variant},{self.k},{self.task},{self.seed},"
                f"{self.best_val_mape!r},{self.test_mape!r},{self.best_epoch}")

    def to_json(self, path) -> None:
        payload = {
            "variant": self.variant,
            "k": self.k,
            "task": self.task,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "best_val_mape": self.best_val_mape,
            "test_mape": self.test_mape,
            "train_loss": self.train_loss,
            "val_mape": self.val_mape,
            "config": asdict(self.config),
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n",
                              encoding="utf-8")


def _stack_task(dataset: StationDataset, years, timestamp: int,
                direction: str) -> tuple[np.ndarray, np.ndarray]:
    mats = [build_task(dataset, y, timestamp, direction) for y in years]
    return (np.concatenate([m.X for m in mats], axis=0),
            np.concatenate([m.y for m in mats], axis=0))


def train(model, dataset: StationDataset, task, split: Split,
          epochs: int | None = None, seed: int | None = None,
          loss: str = "mse", weight_decay: float = 0.01,
          log_every: int = 0) -> TrainReport:
    """Full-batch training over the split's train years.

    Each train year contributes one stacked graph-signal sample.
    Features and targets are standardized with train-year statistics;
    validation/test MAPE is computed in original flow units. Test-year
    matrices are only built after the best-epoch parameters have been
    restored, so test data cannot influence selection.
    """
    timestamp, direction = parse_task(task) if isinstance(task, str) else task
    pair_index(timestamp, direction)
    if loss not in _LOSSES:
        raise ContractError(f"loss must be one of {sorted(_LOSSES)}, got '{loss}'")
    if epochs is None:
        epochs = model.config.epochs
    if epochs < 0:
        raise ContractError(f"epochs must be >= 0, got {epochs}")
    loss_fn = _LOSSES[loss]

    x_train, y_train = _stack_task(dataset, split.train_years, timestamp, direction)
    x_val, y_val = _stack_task(dataset, split.val_years, timestamp, direction)
    feature_std = Standardizer.fit(x_train)
    target_std = Standardizer.fit(y_train)
    xs_train = Tensor(feature_std.transform(x_train))
    ys_train = Tensor(target_std.transform(y_train))
    xs_val = Tensor(feature_std.transform(x_val))

    def val_mape_now() -> float:
        pred = target_std.inverse(model.forward(xs_val).values)
        return mape(pred, y_val)

    def train_loss_now() -> float:
        return loss_fn(model.forward(xs_train), ys_train).item()

    opt = AdamW(model.params(), weight_decay=weight_decay)
    train_curve: list[float] = []
    val_curve: list[float] = [val_mape_now()]
    best_epoch = 0
    best_val = val_curve[0]
    best_params = model.snapshot()

    for epoch in range(epochs):
        with Tape() as tape:
            pred = model.forward(xs_train)
            loss_t = loss_fn(pred, ys_train)
        loss_value = loss_t.item()
        if not np.isfinite(loss_value):
            err = TrainingError(
                f"training loss became non-finite at epoch {epoch}"
            )
            err.epoch = epoch
            raise err
        train_curve.append(loss_value)
        opt.zero_grad()
        backward(loss_t, tape)
        opt.step(lr_at(epoch))
        vm = val_mape_now()
        val_curve.append(vm)
        if vm < best_val:
            best_val = vm
            best_epoch = epoch + 1
            best_params = model.snapshot()
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1:4d}  loss {loss_value:.6f}  "
                  f"val mape {vm:.3f}%")
    train_curve.append(train_loss_now())

    model.restore(best_params)
    x_test, y_test = _stack_task(dataset, split.test_years, timestamp, direction)
    test_pred = target_std.inverse(
        model.forward(Tensor(feature_std.transform(x_test))).values)
    test_mape = mape(test_pred, y_test)

    model.feature_std = feature_std
    model.target_std = target_std
    model.trained_task = (timestamp, direction)

    return TrainReport(
        variant=model.config.variant,
        k=model.config.k,
        task=task_label(timestamp, direction),
        seed=model.config.seed if seed is None else int(seed),
        train_loss=train_curve,
        val_mape=val_curve,
        best_epoch=best_epoch,
        best_val_mape=best_val,
        test_mape=test_mape,
        config=model.config,
    )
