"""Region co-occurrence statistics and the adjacency matrices built from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class CooccurrenceStats:
    """Per (region i, region j, label m) intersection and union image counts."""

    intersection: np.ndarray  # (k, k, M) int64
    union: np.ndarray  # (k, k, M) int64
    n_images: int

    @property
    def k(self) -> int:
        return self.intersection.shape[0]

    @property
    def n_labels(self) -> int:
        return self.intersection.shape[2]

    @classmethod
    def empty(cls, k: int, n_labels: int) -> CooccurrenceStats:
        z = np.zeros((k, k, n_labels), dtype=np.int64)
        return cls(z, z.copy(), 0)

    def merge(self, other: CooccurrenceStats) -> CooccurrenceStats:
        if self.intersection.shape != other.intersection.shape:
            raise ShapeError(
                f"cannot merge stats of shape {self.intersection.shape} and {other.intersection.shape}"
            )
        return CooccurrenceStats(
            self.intersection + other.intersection,
            self.union + other.union,
            self.n_images + other.n_images,
        )


def accumulate_stats(
    labels: Iterable[np.ndarray], k: int | None = None, n_labels: int | None = None
) -> CooccurrenceStats:
    """Count, for every region pair and label, the images where both / either carry it.

    ``labels`` yields one k x M binary array per image.  ``k`` and ``n_labels``
    fix the shape when the sequence may be empty.
    """
    stats = None
    shape = None if k is None or n_labels is None else (k, n_labels)
    for y in labels:
        y = np.asarray(y).astype(bool)
        if shape is None:
            shape = y.shape
        if y.shape != shape:
            raise ShapeError(f"label tensor of shape {y.shape} differs from {shape}")
        if stats is None:
            stats = CooccurrenceStats.empty(*shape)
        a = y[:, None, :]
        b = y[None, :, :]
        stats.intersection += a & b
        stats.union += a | b
        stats.n_images += 1
    if stats is None:
        if shape is None:
            raise ShapeError("empty label sequence: pass k and n_labels")
        stats = CooccurrenceStats.empty(*shape)
    return stats


def jaccard_matrix(stats: CooccurrenceStats) -> np.ndarray:
    """Mean over labels of intersection/union; a label no region pair ever shows contributes 0."""
    inter = stats.intersection.astype(np.float64)
    union = stats.union.astype(np.float64)
    ratio = np.divide(inter, union, out=np.zeros_like(inter), where=stats.union > 0)
    return ratio.sum(axis=2) / stats.n_labels


def threshold(raw: np.ndarray, tau: float = 0.5) -> np.ndarray:
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    return (raw >= tau).astype(np.float64)


def normalize(binary: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self loops: D^-1/2 (B + I) D^-1/2."""
    b = np.asarray(binary, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ShapeError(f"adjacency must be square, got {b.shape}")
    a = b.copy()
    # a region's own features always propagate with weight 1 before scaling
    np.fill_diagonal(a, 1.0)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


@dataclass
class AdjacencyMatrix:
    raw: np.ndarray
    binary: np.ndarray
    normalized: np.ndarray
    tau: float

    @property
    def k(self) -> int:
        return self.raw.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Off-diagonal edges ``(i, j)`` with ``i < j`` of the binary matrix."""
        i, j = np.nonzero(np.triu(self.binary, k=1))
        return list(zip(i.tolist(), j.tolist()))


def build_adjacency(stats: CooccurrenceStats, tau: float = 0.5) -> AdjacencyMatrix:
    raw = jaccard_matrix(stats)
    binary = threshold(raw, tau)
    return AdjacencyMatrix(raw, binary, normalize(binary), float(tau))


def adjacency_from_labels(labels: Iterable[np.ndarray], tau: float = 0.5, **kw) -> AdjacencyMatrix:
    return build_adjacency(accumulate_stats(labels, **kw), tau)
