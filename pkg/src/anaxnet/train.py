"""Mini-batch Adam training for the graph head and the per-region baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericError
from .metrics import evaluate
from .model import (
    ModelConfig,
    baseline_loss_and_grads,
    forward,
    init_baseline,
    init_params,
    loss_and_grads,
    predict_proba,
)
from .tensor import AdamState, ParamStore, adam_step

VARIANTS = ("anaxnet", "baseline-fc")


@dataclass
class TrainConfig:
    epochs: int = 25
    lr: float = 1e-4
    batch: int = 32
    seed: int = 0
    model: str = "anaxnet"

    def __post_init__(self):
        if self.model not in VARIANTS:
            raise ConfigError(f"unknown model variant {self.model!r}")
        if self.epochs < 0 or self.batch < 1 or self.lr <= 0:
            raise ConfigError(f"invalid training config {self}")


@dataclass
class TrainResult:
    params: ParamStore
    best_params: ParamStore
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffle for one epoch from a Philox stream keyed by (seed, epoch)."""
    rng = np.random.Generator(np.random.Philox(key=seed, counter=epoch))
    return rng.permutation(n)


def _first_nonfinite(named) -> str | None:
    for name, x in named:
        if not np.all(np.isfinite(x)):
            return name
    return None


def train(
    model_config: ModelConfig,
    cfg: TrainConfig,
    train_data: tuple[np.ndarray, np.ndarray, np.ndarray],
    adjacency: np.ndarray | None = None,
    val_data: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """Fit one model variant.

    ``train_data`` and ``val_data`` are ``(features, mask, labels)`` stacks.
    The batch gradient is the mean of per-image gradients.  The best
    parameters are chosen by validation macro AUC; without a usable
    validation split they track the final epoch.
    """
    feats, mask, labels = train_data
    baseline = cfg.model == "baseline-fc"
    if baseline:
        params = init_baseline(model_config.d, model_config.n_labels, model_config.seed)
    else:
        if adjacency is None:
            raise ConfigError("the graph model needs an adjacency matrix")
        params = init_params(model_config)
    state = AdamState(lr=cfg.lr)
    result = TrainResult(params, params.copy())
    best_auc = -np.inf
    n = feats.shape[0]

    for epoch in range(1, cfg.epochs + 1):
        order = epoch_order(n, cfg.seed, epoch)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            R, msk, y = feats[idx], mask[idx], labels[idx]
            if baseline:
                loss, grads = baseline_loss_and_grads(R, msk, y, params)
            else:
                loss, grads = loss_and_grads(R, msk, adjacency, y, params)
            if not np.isfinite(loss):
                bad = "loss"
                if not baseline:
                    bad = _first_nonfinite(forward(R, msk, adjacency, params).tensors()) or "loss"
                raise NumericError(f"non-finite loss at epoch {epoch}; first NaN/Inf tensor: {bad}")
            params.set_grads(grads)
            adam_step(params, state)
            total += loss * len(idx)
        train_loss = total / n if n else float("nan")

        val_auc = float("nan")
        if val_data is not None and val_data[0].shape[0]:
            probs = predict_proba(val_data[0], val_data[1], adjacency, params)
            val_auc = evaluate(probs, val_data[2]).macro()
        record = {"epoch": epoch, "train_loss": train_loss, "val_macro_auc": val_auc}
        result.history.append(record)
        if log is not None:
            log(f"epoch={epoch} train_loss={train_loss:.6f} val_macro_auc={val_auc:.6f}")

        if np.isnan(val_auc) or val_auc > best_auc:
            if not np.isnan(val_auc):
                best_auc = val_auc
            result.best_params = params.copy()
            result.best_epoch = epoch
    return result


def full_loss(params: ParamStore, data, adjacency=None) -> float:
    feats, mask, labels = data
    if "W" in params.params:
        return baseline_loss_and_grads(feats, mask, labels, params)[0]
    return loss_and_grads(feats, mask, adjacency, labels, params)[0]
