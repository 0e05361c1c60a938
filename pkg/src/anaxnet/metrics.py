"""Per-(region, label) ROC-AUC, region-averaged label scores and report files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, DataError


def roc_auc(scores, labels) -> float | None:
    """Mann-Whitney AUC with midranks for ties; ``None`` if only one class is present."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DataError(f"{s.size} scores but {y.size} labels")
    if np.isnan(s).any():
        raise DataError("NaN score")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class EvalReport:
    auc: np.ndarray  # (k, M), NaN where undefined
    n_pos: np.ndarray  # (k, M)
    n_neg: np.ndarray
    region_names: list[str]
    label_names: list[str]
    name: str = "model"

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.auc)

    @property
    def per_label(self) -> np.ndarray:
        """Mean AUC of each label over the regions where it is defined (NaN if none)."""
        out = np.full(self.auc.shape[1], np.nan)
        for m in range(self.auc.shape[1]):
            col = self.auc[:, m]
            if (~np.isnan(col)).any():
                out[m] = np.nanmean(col)
        return out

    def macro(self, labels=None) -> float:
        """Mean over defined cells, optionally restricted to a subset of label columns."""
        cells = self.auc if labels is None else self.auc[:, list(labels)]
        cells = cells[~np.isnan(cells)]
        return float(cells.mean()) if cells.size else float("nan")

    def table(self) -> str:
        ids = [f"L{m + 1}" for m in range(len(self.label_names))]
        width = max(12, len(self.name) + 2)
        head = "Method".ljust(width) + "".join(f"{i:>7}" for i in ids) + f"{'AVG':>7}"
        row = self.name.ljust(width) + "".join(_fmt(v) for v in self.per_label)
        row += _fmt(self.macro())
        legend = [f"{i}: {n}" for i, n in zip(ids, self.label_names)]
        return "\n".join([head, row, ""] + legend) + "\n"

    def tsv(self) -> str:
        lines = []
        for r, region in enumerate(self.region_names):
            for m, label in enumerate(self.label_names):
                a = self.auc[r, m]
                val = "NA" if np.isnan(a) else repr(float(a))
                lines.append(f"{region}\t{label}\t{val}\t{self.n_pos[r, m]}\t{self.n_neg[r, m]}")
        return "\n".join(lines) + "\n"

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.txt").write_text(self.table(), encoding="utf-8")
        (directory / "report.tsv").write_text(self.tsv(), encoding="utf-8")


def _fmt(v: float) -> str:
    return f"{'NA':>7}" if np.isnan(v) else f"{v:7.3f}"


def evaluate(probs, labels, region_names=None, label_names=None, name="model") -> EvalReport:
    """AUC for every (region, label) cell across images.

    ``probs`` and ``labels`` have shape (N, k, M).  A cell is scored only
    against the ground truth of that same region, so a finding predicted at
    the wrong region counts against the model.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 3:
        raise DataError(f"probabilities {p.shape} and labels {y.shape} must both be (N, k, M)")
    _, k, m = p.shape
    auc = np.full((k, m), np.nan)
    for r in range(k):
        for j in range(m):
            a = roc_auc(p[:, r, j], y[:, r, j])
            if a is not None:
                auc[r, j] = a
    n_pos = (y == 1).sum(axis=0)
    n_neg = y.shape[0] - n_pos
    return EvalReport(
        auc,
        n_pos,
        n_neg,
        list(region_names) if region_names else [f"R{i + 1}" for i in range(k)],
        list(label_names) if label_names else [f"L{i + 1}" for i in range(m)],
        name,
    )


@dataclass
class Comparison:
    per_label: np.ndarray
    macro: float
    names: tuple[str, str]
    label_names: list[str]

    def table(self) -> str:
        a, b = self.names
        lines = [f"{a} minus {b}"]
        for m, delta in enumerate(self.per_label):
            lines.append(f"L{m + 1:<3} {self.label_names[m]:<32} {_signed(delta)}")
        lines.append(f"{'AVG':<36} {_signed(self.macro)}")
        return "\n".join(lines) + "\n"


def _signed(v: float) -> str:
    return "NA" if np.isnan(v) else f"{v:+.3f}"


def compare(report_a: EvalReport, report_b: EvalReport) -> Comparison:
    if report_a.auc.shape != report_b.auc.shape:
        raise ContractError(f"reports cover {report_a.auc.shape} vs {report_b.auc.shape} cells")
    if not np.array_equal(report_a.defined, report_b.defined):
        raise ContractError("reports are defined on different cells")
    return Comparison(
        report_a.per_label - report_b.per_label,
        report_a.macro() - report_b.macro(),
        (report_a.name, report_b.name),
        report_a.label_names,
    )
