"""Dataset, adjacency and checkpoint files, splitting, and the synthetic generator.

On-disk layout of a dataset directory (all integers little-endian u32)::

    meta.json      manifest (version, N, k, d, M, names, splits, image_ids)
    features.bin   b"ANAXFEAT" version N k d, then N*k*d float32
    labels.bin     b"ANAXLABL" version N k M, then N*k*M bytes in {0, 1}
    mask.bin       b"ANAXMASK" version N k,   then N*k bytes in {0, 1}

Standalone files::

    adjacency.bin  b"ANAXADJM" version k, f64 tau, then raw/binary/normalized k*k float64
    model.bin      b"ANAXMODL" version k d M L, L layer dims, then float64 weights
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjacency import AdjacencyMatrix
from .errors import ConfigError, DataError, FormatError, ShapeError
from .model import ModelConfig
from .tensor import ParamStore

FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")

# Finding vocabulary and anatomical regions of the Chest ImaGenome labelling.
LABEL_NAMES = [
    "Lung Opacity",
    "Pleural Effusion",
    "Atelectasis",
    "Enlarged Cardiac Silhouette",
    "Pulmonary Edema/Hazy Opacity",
    "Pneumothorax",
    "Consolidation",
    "Fluid Overload/Heart Failure",
    "Pneumonia",
]
REGION_NAMES = [
    "RL", "RAZ", "RULZ", "RMLZ", "RLLZ", "RHS", "RCA", "LL", "LAZ",
    "LULZ", "LMLZ", "LLLZ", "LHS", "LCA", "Med", "UMed", "CS", "Trach",
]


def default_label_names(m: int) -> list[str]:
    return [LABEL_NAMES[i] if i < len(LABEL_NAMES) else f"L{i + 1}" for i in range(m)]


def default_region_names(k: int) -> list[str]:
    return [REGION_NAMES[i] if i < len(REGION_NAMES) else f"R{i + 1}" for i in range(k)]


@dataclass
class DatasetManifest:
    k: int
    d: int
    n_labels: int
    image_ids: list[str] = field(default_factory=list)
    splits: dict[str, str] = field(default_factory=dict)
    region_names: list[str] | None = None
    label_names: list[str] | None = None
    version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.region_names is None:
            self.region_names = default_region_names(self.k)
        if self.label_names is None:
            self.label_names = default_label_names(self.n_labels)
        if len(self.region_names) != self.k or len(self.label_names) != self.n_labels:
            raise DataError("region/label name lists do not match k and M")
        if set(self.splits) != set(self.image_ids):
            raise DataError("every image needs exactly one split assignment")
        bad = {s for s in self.splits.values() if s not in SPLITS}
        if bad:
            raise DataError(f"unknown split name(s) {sorted(bad)}")

    @property
    def n_images(self) -> int:
        return len(self.image_ids)

    def split_ids(self, split: str) -> list[str]:
        return [i for i in self.image_ids if self.splits[i] == split]

    def to_json(self) -> dict:
        meta = {
            "version": self.version,
            "N": self.n_images,
            "k": self.k,
            "d": self.d,
            "M": self.n_labels,
            "region_names": self.region_names,
            "label_names": self.label_names,
            "splits": self.splits,
            "image_ids": self.image_ids,
        }
        meta.update(self.extra)
        return meta

    @classmethod
    def from_json(cls, meta: dict) -> DatasetManifest:
        core = {"version", "N", "k", "d", "M", "region_names", "label_names", "splits", "image_ids"}
        missing = core - set(meta)
        if missing:
            raise FormatError(f"meta.json lacks keys {sorted(missing)}")
        if meta["N"] != len(meta["image_ids"]):
            raise FormatError("meta.json: N disagrees with image_ids")
        return cls(
            k=meta["k"],
            d=meta["d"],
            n_labels=meta["M"],
            image_ids=list(meta["image_ids"]),
            splits=dict(meta["splits"]),
            region_names=list(meta["region_names"]),
            label_names=list(meta["label_names"]),
            version=meta["version"],
            extra={key: v for key, v in meta.items() if key not in core},
        )


@dataclass
class ImageRecord:
    image_id: str
    features: np.ndarray  # (k, d) float64
    mask: np.ndarray  # (k,) uint8
    labels: np.ndarray  # (k, M) uint8


def split_counts(n: int, fractions=(0.7, 0.1, 0.2)) -> tuple[int, int, int]:
    n_train = int(n * fractions[0] + 1e-9)
    n_val = int(n * fractions[1] + 1e-9)
    return n_train, n_val, n - n_train - n_val


def assign_splits(image_ids: list[str], counts: tuple[int, int, int]) -> dict[str, str]:
    if sum(counts) != len(image_ids):
        raise DataError(f"split counts {counts} do not partition {len(image_ids)} images")
    names = [s for s, c in zip(SPLITS, counts) for _ in range(c)]
    return dict(zip(image_ids, names))


def stack_records(records: list[ImageRecord], k: int, d: int, m: int):
    """Stack records into ``(features (N,k,d), mask (N,k), labels (N,k,M))`` arrays."""
    if not records:
        return np.zeros((0, k, d)), np.zeros((0, k), np.uint8), np.zeros((0, k, m), np.uint8)
    return (
        np.stack([r.features for r in records]),
        np.stack([r.mask for r in records]),
        np.stack([r.labels for r in records]),
    )


# -- binary helpers ---------------------------------------------------------


def _header(magic: bytes, *ints: int) -> bytes:
    return magic + struct.pack(f"<{len(ints) + 1}I", FORMAT_VERSION, *ints)


def _read_header(buf: bytes, magic: bytes, n_ints: int, path) -> tuple[tuple[int, ...], int]:
    size = len(magic) + 4 * (n_ints + 1)
    if len(buf) < size:
        raise FormatError(f"{path}: truncated header")
    if buf[: len(magic)] != magic:
        raise FormatError(f"{path}: bad magic {buf[:len(magic)]!r}, expected {magic!r}")
    version, *ints = struct.unpack_from(f"<{n_ints + 1}I", buf, len(magic))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return tuple(ints), size


def _payload(buf: bytes, offset: int, nbytes: int, path) -> bytes:
    if len(buf) != offset + nbytes:
        raise FormatError(f"{path}: payload is {len(buf) - offset} bytes, expected {nbytes}")
    return buf[offset:]


def _binary_bytes(data: np.ndarray, path) -> np.ndarray:
    if not np.all((data == 0) | (data == 1)):
        raise DataError(f"{path}: byte values outside {{0, 1}}")
    return data


# -- datasets ---------------------------------------------------------------


def write_dataset(manifest: DatasetManifest, records: list[ImageRecord], directory) -> None:
    directory = Path(directory)
    k, d, m = manifest.k, manifest.d, manifest.n_labels
    if [r.image_id for r in records] != manifest.image_ids:
        raise DataError("records must follow the manifest's image order")
    feats, mask, labels = stack_records(records, k, d, m)
    if feats.shape[1:] != (k, d) or mask.shape[1:] != (k,) or labels.shape[1:] != (k, m):
        raise ShapeError("record shapes disagree with manifest (k, d, M)")
    _binary_bytes(mask, "mask")
    _binary_bytes(labels, "labels")
    n = len(records)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "meta.json").write_text(
        json.dumps(manifest.to_json(), indent=1) + "\n", encoding="utf-8"
    )
    (directory / "features.bin").write_bytes(
        _header(b"ANAXFEAT", n, k, d) + feats.astype("<f4").tobytes()
    )
    (directory / "labels.bin").write_bytes(
        _header(b"ANAXLABL", n, k, m) + labels.astype(np.uint8).tobytes()
    )
    (directory / "mask.bin").write_bytes(_header(b"ANAXMASK", n, k) + mask.astype(np.uint8).tobytes())


def read_manifest(directory) -> DatasetManifest:
    path = Path(directory) / "meta.json"
    try:
        meta = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from e
    manifest = DatasetManifest.from_json(meta)
    if manifest.version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {manifest.version}")
    return manifest


def load_dataset(directory, split: str | None = None) -> tuple[DatasetManifest, list[ImageRecord]]:
    """Read a dataset directory; ``split=None`` returns every image.

    Rows of absent regions are zeroed regardless of what the file stores.
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    n, k, d, m = manifest.n_images, manifest.k, manifest.d, manifest.n_labels

    p = directory / "features.bin"
    buf = p.read_bytes()
    dims, off = _read_header(buf, b"ANAXFEAT", 3, p)
    if dims != (n, k, d):
        raise FormatError(f"{p}: header dims {dims} disagree with meta.json {(n, k, d)}")
    feats = np.frombuffer(_payload(buf, off, 4 * n * k * d, p), dtype="<f4").reshape(n, k, d)

    p = directory / "labels.bin"
    buf = p.read_bytes()
    dims, off = _read_header(buf, b"ANAXLABL", 3, p)
    if dims != (n, k, m):
        raise FormatError(f"{p}: header dims {dims} disagree with meta.json {(n, k, m)}")
    labels = np.frombuffer(_payload(buf, off, n * k * m, p), dtype=np.uint8).reshape(n, k, m)
    _binary_bytes(labels, p)

    p = directory / "mask.bin"
    buf = p.read_bytes()
    dims, off = _read_header(buf, b"ANAXMASK", 2, p)
    if dims != (n, k):
        raise FormatError(f"{p}: header dims {dims} disagree with meta.json {(n, k)}")
    mask = np.frombuffer(_payload(buf, off, n * k, p), dtype=np.uint8).reshape(n, k)
    _binary_bytes(mask, p)

    feats = feats.astype(np.float64) * (mask != 0)[..., None]
    records = [
        ImageRecord(iid, feats[i], mask[i].copy(), labels[i].copy())
        for i, iid in enumerate(manifest.image_ids)
        if split is None or manifest.splits[iid] == split
    ]
    return manifest, records


# -- adjacency and checkpoints ---------------------------------------------


def save_adjacency(adj: AdjacencyMatrix, path) -> None:
    blocks = np.stack([adj.raw, adj.binary, adj.normalized]).astype("<f8")
    Path(path).write_bytes(
        _header(b"ANAXADJM", adj.k) + struct.pack("<d", adj.tau) + blocks.tobytes()
    )


def load_adjacency(path) -> AdjacencyMatrix:
    buf = Path(path).read_bytes()
    (k,), off = _read_header(buf, b"ANAXADJM", 1, path)
    if len(buf) < off + 8:
        raise FormatError(f"{path}: truncated header")
    (tau,) = struct.unpack_from("<d", buf, off)
    data = np.frombuffer(_payload(buf, off + 8, 3 * 8 * k * k, path), dtype="<f8")
    raw, binary, normalized = data.astype(np.float64).reshape(3, k, k)
    return AdjacencyMatrix(raw, binary, normalized, tau)


def save_checkpoint(params: ParamStore, config: ModelConfig, path) -> None:
    """Write weights; a store holding only ``W`` is saved as the zero-layer baseline."""
    if "W" in params.params:
        dims: list[int] = []
        mats = [params["W"]]
        expected = [(config.d, config.n_labels)]
    else:
        dims = list(config.gcn_dims)
        mats = [params[n] for n in config.layer_names()] + [params["W2"]]
        expected = []
        fan_in = config.d
        for out in dims:
            expected.append((fan_in, out))
            fan_in = out
        expected.append((2 * config.d, config.n_labels))
    for mat, shape in zip(mats, expected):
        if mat.shape != shape:
            raise ShapeError(f"weight of shape {mat.shape} does not fit config (expected {shape})")
    head = _header(b"ANAXMODL", config.k, config.d, config.n_labels, len(dims))
    head += struct.pack(f"<{len(dims)}I", *dims)
    body = b"".join(np.ascontiguousarray(w, dtype="<f8").tobytes() for w in mats)
    Path(path).write_bytes(head + body)


def load_checkpoint(path) -> tuple[ParamStore, ModelConfig]:
    buf = Path(path).read_bytes()
    (k, d, m, n_layers), off = _read_header(buf, b"ANAXMODL", 4, path)
    if len(buf) < off + 4 * n_layers:
        raise FormatError(f"{path}: truncated layer table")
    dims = list(struct.unpack_from(f"<{n_layers}I", buf, off))
    off += 4 * n_layers
    store = ParamStore()
    if n_layers == 0:
        shapes = [("W", (d, m))]
        config = ModelConfig(k=k, d=d, n_labels=m)
    else:
        try:
            config = ModelConfig(k=k, d=d, gcn_dims=dims, n_labels=m)
        except ConfigError as e:
            raise FormatError(f"{path}: {e}") from e
        shapes, fan_in = [], d
        for name, out in zip(config.layer_names(), dims):
            shapes.append((name, (fan_in, out)))
            fan_in = out
        shapes.append(("W2", (2 * d, m)))
    total = sum(r * c for _, (r, c) in shapes)
    data = np.frombuffer(_payload(buf, off, 8 * total, path), dtype="<f8").astype(np.float64)
    pos = 0
    for name, (r, c) in shapes:
        store.add(name, data[pos : pos + r * c].reshape(r, c))
        pos += r * c
    return store, config


# -- synthetic data -----------------------------------------------------------


def pairing_graph(k: int) -> np.ndarray:
    """Regions (0,1), (2,3), ... joined in pairs; an odd last region stays isolated."""
    g = np.zeros((k, k), dtype=np.int64)
    for i in range(0, k - 1, 2):
        g[i, i + 1] = g[i + 1, i] = 1
    return g


@dataclass
class SynthSpec:
    """Generator settings for region-feature datasets with a planted region graph.

    Ordinary labels are seeded per region with ``seed_rate`` and copied to each
    graph neighbour with probability ``propagation``; their signal direction is
    written into the labelled region's own row with amplitude ``signal``.
    Context-coded labels are drawn independently per region with
    ``context_rate`` and are never propagated; their direction is written only
    into the rows of the labelled region's graph neighbours, with amplitude
    ``context_signal``.  Every row also carries a constant component of size
    ``offset`` along a direction no label uses, standing in for the non-zero
    mean of real detector embeddings.
    """

    k: int = 6
    d: int = 32
    n_labels: int = 4
    graph: np.ndarray | None = None
    context_labels: tuple[int, ...] | None = None
    seed: int = 0
    noise_std: float = 1.0
    n_train: int = 2000
    n_val: int = 250
    n_test: int = 500
    propagation: float = 0.8
    seed_rate: float = 0.2
    context_rate: float = 0.5
    signal: float = 4.0
    context_signal: float = 2.0
    offset: float = 8.0
    missing_rate: float = 0.0

    def __post_init__(self):
        if self.graph is None:
            self.graph = pairing_graph(self.k)
        self.graph = np.asarray(self.graph, dtype=np.int64)
        if self.context_labels is None:
            self.context_labels = tuple(range(self.n_labels // 2, self.n_labels))
        self.context_labels = tuple(int(c) for c in self.context_labels)
        g = self.graph
        if g.shape != (self.k, self.k):
            raise ConfigError(f"graph must be {self.k}x{self.k}, got {g.shape}")
        if not (np.array_equal(g, g.T) and np.all(np.diag(g) == 0) and np.all((g == 0) | (g == 1))):
            raise ConfigError("graph must be binary, symmetric, with zero diagonal")
        if any(not 0 <= c < self.n_labels for c in self.context_labels):
            raise ConfigError(f"context label index out of range: {self.context_labels}")
        for name in ("propagation", "seed_rate", "context_rate", "missing_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        if min(self.n_train, self.n_val, self.n_test) < 0 or self.noise_std < 0:
            raise ConfigError("negative image count or noise")

    @property
    def n_images(self) -> int:
        return self.n_train + self.n_val + self.n_test

    def is_context(self) -> np.ndarray:
        flags = np.zeros(self.n_labels, dtype=bool)
        flags[list(self.context_labels)] = True
        return flags

    def label_rates(self) -> np.ndarray:
        """Closed-form positive rate per (region, label)."""
        deg = self.graph.sum(axis=1)[:, None]
        ordinary = 1.0 - (1.0 - self.seed_rate) * (1.0 - self.seed_rate * self.propagation) ** deg
        rates = np.repeat(ordinary, self.n_labels, axis=1)
        rates[:, self.is_context()] = self.context_rate
        return rates


def _directions(rng: np.random.Generator, d: int, m: int) -> np.ndarray:
    """``m`` unit vectors in R^d, orthonormal when ``m <= d``."""
    g = rng.standard_normal((d, m))
    if m <= d:
        q, _ = np.linalg.qr(g)
        return q.T
    return (g / np.linalg.norm(g, axis=0)).T


def generate_synthetic(spec: SynthSpec) -> tuple[DatasetManifest, list[ImageRecord]]:
    rng = np.random.default_rng(spec.seed)
    n, k, d, m = spec.n_images, spec.k, spec.d, spec.n_labels
    ctx = spec.is_context()
    g = spec.graph.astype(bool)

    directions = _directions(rng, d, m + 1)
    offset_dir, directions = directions[-1], directions[:-1]
    rate = np.where(ctx, spec.context_rate, spec.seed_rate)
    seeds = rng.random((n, k, m)) < rate
    # fired[n, i, j, m]: a seed at region i spreads to neighbour j
    fired = rng.random((n, k, k, m)) < spec.propagation
    spread = (seeds[:, :, None, :] & fired & g[None, :, :, None]).any(axis=1)
    labels = seeds | (spread & ~ctx)

    y = labels.astype(np.float64)
    own = np.where(ctx, 0.0, spec.signal)
    # neighbour_labels[n, r, m] = number of graph neighbours of r carrying m
    neighbour_labels = np.einsum("ij,njm->nim", spec.graph.astype(np.float64), y)
    amp = y * own + neighbour_labels * np.where(ctx, spec.context_signal, 0.0)
    feats = spec.noise_std * rng.standard_normal((n, k, d)) + amp @ directions
    feats += spec.offset * offset_dir
    # store exactly what the float32 file format can hold
    feats = feats.astype(np.float32).astype(np.float64)
    mask = (rng.random((n, k)) >= spec.missing_rate).astype(np.uint8)

    image_ids = [f"img{i:06d}" for i in range(n)]
    manifest = DatasetManifest(
        k=k,
        d=d,
        n_labels=m,
        image_ids=image_ids,
        splits=assign_splits(image_ids, (spec.n_train, spec.n_val, spec.n_test)),
        extra={
            "synth": {
                "seed": spec.seed,
                "graph": spec.graph.tolist(),
                "context_labels": list(spec.context_labels),
            }
        },
    )
    records = [
        ImageRecord(iid, feats[i], mask[i], labels[i].astype(np.uint8))
        for i, iid in enumerate(image_ids)
    ]
    return manifest, records
