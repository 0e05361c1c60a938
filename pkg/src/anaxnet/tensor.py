"""Dense float64 matrix primitives, a parameter store, Adam and a gradient checker.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Every
primitive also accepts a stack of matrices (leading batch axes), treating the
last two axes as rows and columns, so a whole mini-batch of images can go
through one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, NumericError, ShapeError

Matrix = np.ndarray


def as_matrix(x) -> Matrix:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim < 2:
        raise ShapeError(f"expected a matrix (ndim >= 2), got shape {a.shape}")
    return a


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return np.matmul(a, b)


def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0.0)


def relu_backward(grad: Matrix, x: Matrix) -> Matrix:
    # subgradient at exactly 0 is 0
    return grad * (x > 0.0)


def row_softmax(x: Matrix) -> Matrix:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def row_softmax_backward(grad: Matrix, p: Matrix) -> Matrix:
    """Gradient w.r.t. the logits given the upstream gradient and softmax output."""
    return p * (grad - np.sum(grad * p, axis=-1, keepdims=True))


def sigmoid(x: Matrix) -> Matrix:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ParamStore:
    """Named parameters with same-shaped gradient slots and an optimizer step count."""

    params: dict[str, Matrix] = field(default_factory=dict)
    grads: dict[str, Matrix] = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value: Matrix) -> None:
        self.params[name] = np.array(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])

    def set_grads(self, grads: dict[str, Matrix]) -> None:
        for name, g in grads.items():
            if name not in self.params:
                raise ContractError(f"gradient for unknown parameter {name!r}")
            if g.shape != self.params[name].shape:
                raise ShapeError(
                    f"gradient {name!r} has shape {g.shape}, parameter has {self.params[name].shape}"
                )
            self.grads[name] = np.array(g, dtype=np.float64)

    def zero_grads(self) -> None:
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)

    def copy(self) -> ParamStore:
        return ParamStore(
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.grads.items()},
            self.step,
        )

    def __getitem__(self, name: str) -> Matrix:
        return self.params[name]


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: dict[str, Matrix] = field(default_factory=dict)
    v: dict[str, Matrix] = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState) -> ParamStore:
    """Apply one bias-corrected Adam update in place and return ``store``.

    Gradients are read but not cleared; zeroing them is the caller's job.
    """
    missing = [name for name in store.params if name not in store.grads]
    if missing:
        raise ContractError(f"no gradient for parameter(s) {missing}")
    t = store.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in store.params.items():
        g = store.grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient {name!r} has shape {g.shape}, parameter has {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    store.step = t
    return store


def grad_check(
    f: Callable[[ParamStore], float],
    store: ParamStore,
    h: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
    kinks: Callable[[ParamStore], np.ndarray] | None = None,
    info: dict | None = None,
) -> float:
    """Worst relative error between ``store.grads`` and central differences of ``f``.

    ``store.grads`` must already hold the analytic gradient at the current
    parameters.  Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps round-off on an
    exactly-zero gradient from reading as a 100% error.  With ``max_coords``
    set, at most that many coordinates per parameter are sampled with ``rng``.

    ``kinks`` maps parameters to the on/off pattern of every piecewise-linear
    unit.  A coordinate whose +-h probes change that pattern straddles a kink,
    where central differences do not estimate the derivative; such coordinates
    are left out and counted in ``info["skipped"]`` (``info["checked"]``
    counts the rest).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    analytic = {k: v.copy() for k, v in store.grads.items()}
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    checked = skipped = 0
    base = kinks(store) if kinks is not None else None
    for name, p in store.params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        a_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = f(store)
            crossed = base is not None and not np.array_equal(kinks(store), base)
            flat[i] = orig - h
            fm = f(store)
            crossed = crossed or (base is not None and not np.array_equal(kinks(store), base))
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite objective while perturbing {name}[{i}]")
            if crossed:
                skipped += 1
                continue
            num = (fp - fm) / (2.0 * h)
            a = a_flat[i]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
            checked += 1
    store.grads = analytic
    if info is not None:
        info.update(checked=checked, skipped=skipped)
    return worst
