"""Anatomy-aware classification head and the per-region fully connected baseline.

Shapes, with a leading batch axis ``B`` that may be omitted everywhere::

    R       (B, k, d)       region features, absent rows zeroed
    A       (k, k)          normalized region adjacency
    H_l     (B, k, dims[l]) ReLU(A H_{l-1} W1_l), H_{-1} = R
    Z       (B, k, d)       last GCN activation
    P       (B, k, k)       row_softmax(R Z^T)
    Q       (B, k, d)       P R
    logits  (B, k, M)       [R ; Q] W2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DataError, ShapeError
from .tensor import (
    Matrix,
    ParamStore,
    matmul,
    relu,
    relu_backward,
    row_softmax,
    row_softmax_backward,
    sigmoid,
)


@dataclass
class ModelConfig:
    k: int = 18
    d: int = 1024
    gcn_dims: list[int] | None = None
    n_labels: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.gcn_dims is None:
            self.gcn_dims = [512, 1024] if self.d == 1024 else [max(1, self.d // 2), self.d]
        self.gcn_dims = [int(x) for x in self.gcn_dims]
        if min(self.k, self.d, self.n_labels) < 1:
            raise ConfigError(f"k, d and n_labels must be >= 1: {self}")
        if not self.gcn_dims or self.gcn_dims[-1] != self.d:
            raise ConfigError(f"last GCN dim must equal d={self.d}, got {self.gcn_dims}")

    def layer_names(self) -> list[str]:
        return [f"W1_layer{i + 1}" for i in range(len(self.gcn_dims))]


def init_params(config: ModelConfig) -> ParamStore:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    store = ParamStore()
    fan_in = config.d
    for name, out in zip(config.layer_names(), config.gcn_dims):
        bound = 1.0 / np.sqrt(fan_in)
        store.add(name, rng.uniform(-bound, bound, size=(fan_in, out)))
        fan_in = out
    bound = 1.0 / np.sqrt(2 * config.d)
    store.add("W2", rng.uniform(-bound, bound, size=(2 * config.d, config.n_labels)))
    return store


def init_baseline(d: int, n_labels: int, seed: int = 0) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    bound = 1.0 / np.sqrt(d)
    store.add("W", rng.uniform(-bound, bound, size=(d, n_labels)))
    return store


def _check_features(R: Matrix, A: Matrix) -> None:
    k = R.shape[-2]
    if A.shape != (k, k):
        raise ShapeError(f"adjacency {A.shape} does not match features {R.shape}")


def gcn_forward(R: Matrix, A: Matrix, weights: list[Matrix]) -> tuple[list[Matrix], list[Matrix]]:
    """Stacked graph convolutions. Returns (pre-activations, activations) per layer."""
    _check_features(R, A)
    pre, act = [], []
    h = R
    for W in weights:
        z = matmul(matmul(A, h), W)
        h = relu(z)
        pre.append(z)
        act.append(h)
    return pre, act


def attention_forward(R: Matrix, Z: Matrix) -> tuple[Matrix, Matrix]:
    """Non-local mixing ``Q = row_softmax(R Z^T) R``. Returns ``(Q, P)``."""
    if R.shape != Z.shape:
        raise ShapeError(f"attention needs matching shapes, got {R.shape} and {Z.shape}")
    P = row_softmax(matmul(R, np.swapaxes(Z, -1, -2)))
    return matmul(P, R), P


def classify(R: Matrix, Q: Matrix, W2: Matrix) -> Matrix:
    if R.shape != Q.shape:
        raise ShapeError(f"classifier needs matching R and Q, got {R.shape} and {Q.shape}")
    return matmul(np.concatenate([R, Q], axis=-1), W2)


def baseline_forward(R: Matrix, W: Matrix) -> Matrix:
    """Independent per-region linear classifier."""
    return matmul(R, W)


def _check_labels(labels: np.ndarray) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("labels must be 0 or 1")
    return y


def bce_loss(logits: Matrix, labels: np.ndarray) -> float:
    """Binary cross-entropy on logits, averaged over every region, label and image."""
    y = _check_labels(labels)
    if y.shape != logits.shape:
        raise ShapeError(f"labels {y.shape} do not match logits {logits.shape}")
    x = logits
    # -[y log s(x) + (1-y) log(1-s(x))] = max(x,0) - x y + log(1 + e^-|x|)
    per_cell = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    return float(per_cell.mean())


def bce_grad(logits: Matrix, labels: np.ndarray) -> Matrix:
    return (sigmoid(logits) - labels) / logits.size


def apply_mask(R: Matrix, mask: np.ndarray | None) -> Matrix:
    R = np.asarray(R, dtype=np.float64)
    if mask is None:
        return R
    mask = np.asarray(mask)
    if mask.shape != R.shape[:-1]:
        raise ShapeError(f"mask {mask.shape} does not match features {R.shape}")
    return R * (mask != 0)[..., None]


@dataclass
class ForwardTrace:
    R: Matrix
    A: Matrix
    pre: list[Matrix]
    act: list[Matrix]
    P: Matrix
    Q: Matrix
    logits: Matrix
    param_shapes: dict[str, tuple] = field(default_factory=dict)

    @property
    def Z(self) -> Matrix:
        return self.act[-1]

    @property
    def attention_logits(self) -> Matrix:
        return matmul(self.R, np.swapaxes(self.Z, -1, -2))

    def tensors(self) -> list[tuple[str, Matrix]]:
        named = [("R", self.R)]
        named += [(f"gcn{i + 1}_pre", z) for i, z in enumerate(self.pre)]
        named += [("attention", self.P), ("Q", self.Q), ("logits", self.logits)]
        return named


def _layer_names(params: ParamStore) -> list[str]:
    return sorted((n for n in params.params if n.startswith("W1_layer")), key=lambda n: int(n[8:]))


def _weights(params: ParamStore) -> list[Matrix]:
    return [params[n] for n in _layer_names(params)]


def forward(R: Matrix, mask, A: Matrix, params: ParamStore) -> ForwardTrace:
    R = apply_mask(R, mask)
    pre, act = gcn_forward(R, A, _weights(params))
    if act[-1].shape != R.shape:
        raise ShapeError(f"GCN output {act[-1].shape} must match features {R.shape}")
    Q, P = attention_forward(R, act[-1])
    logits = classify(R, Q, params["W2"])
    shapes = {n: p.shape for n, p in params.params.items()}
    return ForwardTrace(R, A, pre, act, P, Q, logits, shapes)


def _sum_batch(x: Matrix) -> Matrix:
    return x.reshape(-1, *x.shape[-2:]).sum(axis=0) if x.ndim > 2 else x


def backward(trace: ForwardTrace, labels: np.ndarray, params: ParamStore) -> dict[str, Matrix]:
    """Gradients of ``bce_loss(trace.logits, labels)`` for every weight matrix."""
    shapes = {n: p.shape for n, p in params.params.items()}
    if shapes != trace.param_shapes:
        raise ContractError("trace was produced with different parameters")
    y = _check_labels(labels)
    if y.shape != trace.logits.shape:
        raise ShapeError(f"labels {y.shape} do not match logits {trace.logits.shape}")
    R, A = trace.R, trace.A
    d = R.shape[-1]
    W2 = params["W2"]
    names = _layer_names(params)
    weights = [params[n] for n in names]

    g_logits = bce_grad(trace.logits, y)
    concat = np.concatenate([R, trace.Q], axis=-1)
    grads = {"W2": _sum_batch(np.swapaxes(concat, -1, -2) @ g_logits)}

    g_Q = g_logits @ W2[d:].T
    g_P = g_Q @ np.swapaxes(R, -1, -2)
    g_S = row_softmax_backward(g_P, trace.P)
    # S = R Z^T, so dZ = dS^T R; R itself is an input and needs no gradient
    g_h = np.swapaxes(g_S, -1, -2) @ R

    for layer in reversed(range(len(weights))):
        g_z = relu_backward(g_h, trace.pre[layer])
        h_in = R if layer == 0 else trace.act[layer - 1]
        ah = A @ h_in
        grads[names[layer]] = _sum_batch(np.swapaxes(ah, -1, -2) @ g_z)
        if layer > 0:
            g_h = A.T @ (g_z @ weights[layer].T)
    return grads


def loss_and_grads(R, mask, A, labels, params: ParamStore) -> tuple[float, dict[str, Matrix]]:
    trace = forward(R, mask, A, params)
    return bce_loss(trace.logits, labels), backward(trace, labels, params)


def baseline_loss_and_grads(R, mask, labels, params: ParamStore) -> tuple[float, dict[str, Matrix]]:
    R = apply_mask(R, mask)
    logits = baseline_forward(R, params["W"])
    y = _check_labels(labels)
    g = bce_grad(logits, y)
    return bce_loss(logits, y), {"W": _sum_batch(np.swapaxes(R, -1, -2) @ g)}


def predict_proba(R, mask, A, params: ParamStore) -> np.ndarray:
    """Per-region label probabilities for either model variant."""
    if "W" in params.params:
        return sigmoid(baseline_forward(apply_mask(R, mask), params["W"]))
    return sigmoid(forward(R, mask, A, params).logits)


def relu_pattern(R, mask, A, params: ParamStore) -> np.ndarray:
    """On/off state of every GCN unit, flattened; changes only when a kink is crossed."""
    pre, _ = gcn_forward(apply_mask(R, mask), A, _weights(params))
    return np.concatenate([(z > 0).ravel() for z in pre])


def toy_gradcheck(seed: int = 0, h: float = 1e-3, corrupt: bool = False, info: dict | None = None) -> float:
    """Finite-difference check of the full loss on a random small problem.

    The toy draws k <= 4, d <= 8, M <= 3, a random region graph and a batch of
    three images with one absent region.  ``corrupt`` perturbs the analytic
    gradient so callers can confirm the check actually fails.
    """
    from .adjacency import normalize
    from .tensor import grad_check

    rng = np.random.default_rng(seed)
    k, d, m = int(rng.integers(2, 5)), int(rng.integers(2, 9)), int(rng.integers(1, 4))
    params = init_params(ModelConfig(k=k, d=d, n_labels=m, seed=seed))
    R = rng.standard_normal((3, k, d))
    mask = np.ones((3, k), dtype=np.uint8)
    mask[0, rng.integers(k)] = 0
    upper = np.triu(rng.random((k, k)) < 0.5, 1)
    A = normalize(upper | upper.T)
    y = (rng.random((3, k, m)) < 0.5).astype(np.float64)

    _, grads = loss_and_grads(R, mask, A, y, params)
    if corrupt:
        grads = {name: g + 1e-2 * (1.0 + np.abs(g)) for name, g in grads.items()}
    params.set_grads(grads)
    return grad_check(
        lambda p: bce_loss(forward(R, mask, A, p).logits, y),
        params,
        h=h,
        kinks=lambda p: relu_pattern(R, mask, A, p),
        info=info,
    )
