"""Threshold-free detector metrics: AUROC, AUPR_IN, AUPR_OUT."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .scoring import ScoreKind, ScoreRecord


class DegenerateDataError(ValueError):
    """Scores of only one class were supplied."""


def _nonempty(name, values) -> np.ndarray:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
    if arr.size == 0:
        raise DegenerateDataError(f"{name} is empty")
    return arr


def auroc(id_scores, ood_scores) -> float:
    """P(ood > id) + 0.5 * P(ood == id), via the Mann-Whitney rank sum."""
    a = _nonempty("id_scores", id_scores)
    b = _nonempty("ood_scores", ood_scores)
    ranks = rankdata(np.concatenate([a, b]), method="average")
    u = ranks[a.size :].sum() - b.size * (b.size + 1) / 2.0
    return float(u / (a.size * b.size))


def aupr(positives, negatives) -> float:
    """Step-wise average precision; tied scores enter as one threshold group."""
    pos = _nonempty("positives", positives)
    neg = _nonempty("negatives", negatives)
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    order = np.argsort(-scores, kind="stable")
    scores, is_pos = scores[order], is_pos[order]
    # last index of every tie group in the descending sweep
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = np.cumsum(is_pos)[ends]
    precision = tp / (ends + 1)
    recall = tp / pos.size
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class MetricRow:
    auroc: float
    aupr_in: float
    aupr_out: float


@dataclass
class EvalReport:
    rows: dict[str, MetricRow]
    n_id: int
    n_ood: int
    dataset_seed: int | None = None
    weight_digest: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metrics": {k: asdict(v) for k, v in self.rows.items()},
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "dataset_seed": self.dataset_seed,
            "weight_digest": self.weight_digest,
            **self.extra,
        }


def metric_row(id_scores, ood_scores) -> MetricRow:
    id_scores = np.asarray(id_scores, dtype=float)
    ood_scores = np.asarray(ood_scores, dtype=float)
    return MetricRow(
        auroc=auroc(id_scores, ood_scores),
        aupr_in=aupr(-id_scores, -ood_scores),
        aupr_out=aupr(ood_scores, id_scores),
    )


def split_scores(records: Sequence[ScoreRecord], kind: ScoreKind) -> tuple[np.ndarray, np.ndarray]:
    id_s = np.array([r.score(kind) for r in records if r.is_id])
    ood_s = np.array([r.score(kind) for r in records if not r.is_id])
    if id_s.size == 0 or ood_s.size == 0:
        raise DegenerateDataError("records must contain both ID and OOD frames")
    return id_s, ood_s


def evaluate(
    records: Sequence[ScoreRecord],
    baseline: Sequence[ScoreRecord] | None = None,
    dataset_seed: int | None = None,
    weight_digest: str | None = None,
) -> EvalReport:
    """PB-REC and PB-LSE rows from ``records``; a Baseline-REC row when baseline records are given."""
    rows = {}
    for name, kind in (("PB-REC", ScoreKind.REC), ("PB-LSE", ScoreKind.ENERGY)):
        rows[name] = metric_row(*split_scores(records, kind))
    if baseline is not None:
        rows["Baseline-REC"] = metric_row(*split_scores(baseline, ScoreKind.REC))
    n_id = sum(r.is_id for r in records)
    return EvalReport(rows, n_id, len(records) - n_id, dataset_seed, weight_digest)


def format_table(report: EvalReport) -> str:
    """Aligned text table, metrics in percent with two decimals."""
    name_w = max(len("Method"), *(len(k) for k in report.rows))
    lines = [f"{'Method':<{name_w}}  {'AUROC':>7}  {'AUPR_IN':>7}  {'AUPR_OUT':>8}"]
    lines.append("-" * len(lines[0]))
    for name, row in report.rows.items():
        lines.append(f"{name:<{name_w}}  {100 * row.auroc:7.2f}  {100 * row.aupr_in:7.2f}  {100 * row.aupr_out:8.2f}")
    lines.append(f"(ID frames: {report.n_id}, OOD frames: {report.n_ood})")
    return "\n".join(lines)
