"""Anatomy-aware multi-label finding classification over chest X-ray regions.

Region features (one row per anatomical region) are propagated over a
label co-occurrence graph, mixed back with the raw features by a non-local
attention step, and classified per region.
"""

from .adjacency import (
    AdjacencyMatrix,
    CooccurrenceStats,
    accumulate_stats,
    adjacency_from_labels,
    build_adjacency,
    jaccard_matrix,
    normalize,
    threshold,
)
from .data import (
    DatasetManifest,
    ImageRecord,
    SynthSpec,
    generate_synthetic,
    load_adjacency,
    load_checkpoint,
    load_dataset,
    save_adjacency,
    save_checkpoint,
    stack_records,
    write_dataset,
)
from .metrics import EvalReport, compare, evaluate, roc_auc
from .model import (
    ForwardTrace,
    ModelConfig,
    attention_forward,
    backward,
    baseline_forward,
    bce_loss,
    classify,
    forward,
    gcn_forward,
    init_baseline,
    init_params,
    predict_proba,
)
from .tensor import AdamState, ParamStore, adam_step, grad_check
from .train import TrainConfig, train

__version__ = "0.1.0"
