"""Anomaly scoring, threshold selection, and detection metrics.

Scores are negated densities, so high score means anomalous. The anomaly
class carries label 1 throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .kde import density, importance_sample, stratified_sample
from .mmd import distance_matrix
from .model import DensityModel

__all__ = [
    "ScoreResult",
    "EvalReport",
    "reference_densities",
    "score",
    "threshold",
    "auroc",
    "auprc",
    "fpr95",
    "density_gap",
    "evaluate",
    "save_report",
    "save_scores_csv",
]

SAMPLE_MODES = ("none", "stratified", "importance")


def _density_rows(queries, references, model: DensityModel) -> np.ndarray:
    dm = distance_matrix(queries, references, model.gnn, model.family)
    return np.array(
        [density(dm.values[i], model.kde).density for i in range(dm.values.shape[0])]
    )


def reference_densities(
    reference, model: DensityModel, leave_one_out: bool = False
) -> np.ndarray:
    """Density of every reference graph against the full reference set.

    ``leave_one_out`` drops each graph's own zero distance before the
    density average, removing the constant self-kernel mass; off by
    default so scored members keep their reference contribution.
    """
    if len(reference) == 0:
        raise ValidationError("empty reference set")
    if leave_one_out and len(reference) < 2:
        raise ValidationError("leave-one-out needs at least 2 references")
    dm = distance_matrix(reference, None, model.gnn, model.family)
    keep = ~np.eye(len(reference), dtype=bool)
    return np.array(
        [
            density(
                dm.values[i, keep[i]] if leave_one_out else dm.values[i], model.kde
            ).density
            for i in range(len(reference))
        ]
    )


@dataclass(frozen=True)
class ScoreResult:
    """Per-query anomaly scores with the densities they negate."""

    scores: np.ndarray
    densities: np.ndarray
    reference_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.scores.shape != self.densities.shape:
            raise ValidationError("scores and densities must align")
        if not np.allclose(self.scores, -self.densities):
            raise ValidationError("scores must negate densities")


def score(
    queries,
    reference,
    model: DensityModel,
    sample: str = "none",
    ratio: float = 1.0,
    seed: int = 0,
) -> ScoreResult:
    """Anomaly scores of ``queries`` against a trained reference set.

    With ``sample`` set, the reference is first subsampled by the named
    strategy (sized by ``ratio`` for importance sampling) and scoring runs
    against the subset only.
    """
    if len(queries) == 0:
        raise ValidationError("empty query set")
    if len(reference) == 0:
        raise ValidationError("empty reference set")
    if sample not in SAMPLE_MODES:
        raise ValidationError(f"unknown sample mode {sample!r}; pick from {SAMPLE_MODES}")
    refs = list(reference)
    indices = None
    if sample != "none":
        rho = reference_densities(reference, model)
        rng = np.random.default_rng(seed)
        if sample == "importance":
            chosen = importance_sample(rho, ratio, rng)
        else:
            chosen = stratified_sample(rho, rng)
        indices = tuple(int(i) for i in chosen)
        refs = [refs[i] for i in chosen]
    densities = _density_rows(queries, refs, model)
    return ScoreResult(-densities, densities, indices)


def threshold(reference_densities, percentile: float = 10.0) -> float:
    """Negated nearest-rank (lower) percentile of the reference densities."""
    rho = np.asarray(reference_densities, dtype=np.float64).ravel()
    if rho.size == 0:
        raise ValidationError("empty reference densities")
    if not 0.0 < percentile < 100.0:
        raise ValidationError(f"percentile {percentile} outside (0, 100)")
    rank = max(1, math.ceil(percentile * rho.size / 100.0 - 1e-9))
    return float(-np.sort(rho)[rank - 1])


def _binary_split(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape or s.size == 0:
        raise ValidationError("scores and labels must be equal-length and non-empty")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0 (normal) or 1 (anomalous)")
    pos = s[y == 1]
    neg = s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("both classes required for ranking metrics")
    return pos, neg


def auroc(scores, labels) -> float:
    """Probability a positive outranks a negative; ties count one half."""
    pos, neg = _binary_split(scores, labels)
    s = np.concatenate([pos, neg])
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    fresh = np.concatenate([[True], sorted_s[1:] != sorted_s[:-1]])
    group = np.cumsum(fresh) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    mean_rank = ends - 0.5 * (counts - 1)
    ranks = np.empty(s.size)
    ranks[order] = mean_rank[group]
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def auprc(scores, labels) -> float:
    """Area under precision-recall via the step sum over score thresholds."""
    pos, neg = _binary_split(scores, labels)
    s = np.concatenate([pos, neg])
    y = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    y_desc = y[order]
    tp = np.cumsum(y_desc)
    fp = np.cumsum(1.0 - y_desc)
    last = np.concatenate([s_desc[1:] != s_desc[:-1], [True]])
    precision = tp[last] / (tp[last] + fp[last])
    recall = tp[last] / pos.size
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def fpr95(scores, labels, tpr_target: float = 0.95) -> float:
    """False-positive rate at the largest threshold reaching the TPR target."""
    if not 0.0 < tpr_target <= 1.0:
        raise ValidationError(f"tpr_target {tpr_target} outside (0, 1]")
    pos, neg = _binary_split(scores, labels)
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    pos_sorted = np.sort(pos)
    tpr = 1.0 - np.searchsorted(pos_sorted, thresholds, side="left") / pos.size
    pick = thresholds[int(np.argmax(tpr >= tpr_target))]
    neg_sorted = np.sort(neg)
    return float(1.0 - np.searchsorted(neg_sorted, pick, side="left") / neg.size)


def density_gap(model: DensityModel, normals, anomalies, reference) -> float:
    """Mean density of true normals minus mean density of true anomalies."""
    if len(normals) == 0 or len(anomalies) == 0 or len(reference) == 0:
        raise ValidationError("normals, anomalies, and reference must be non-empty")
    f_normal = _density_rows(normals, list(reference), model)
    f_anomalous = _density_rows(anomalies, list(reference), model)
    return float(f_normal.mean() - f_anomalous.mean())


@dataclass(frozen=True)
class EvalReport:
    """Scores, decision threshold, predictions, and ranking metrics."""

    scores: tuple[float, ...]
    threshold: float
    predictions: tuple[bool, ...]
    auroc: float | None = None
    auprc: float | None = None
    fpr95: float | None = None
    density_gap: float | None = None

    def __post_init__(self):
        if len(self.scores) != len(self.predictions):
            raise ValidationError("one prediction per score required")
        for name in ("auroc", "auprc", "fpr95"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} {value} outside [0, 1]")
        for s, p in zip(self.scores, self.predictions):
            if p != (s > self.threshold):
                raise ValidationError("predictions must equal (score > threshold)")

    def to_dict(self) -> dict:
        return {
            "scores": list(self.scores),
            "threshold": self.threshold,
            "predictions": [bool(p) for p in self.predictions],
            "auroc": self.auroc,
            "auprc": self.auprc,
            "fpr95": self.fpr95,
            "density_gap": self.density_gap,
        }


def evaluate(
    queries,
    reference,
    model: DensityModel,
    labels=None,
    gamma_percentile: float = 10.0,
    sample: str = "none",
    ratio: float = 1.0,
    seed: int = 0,
) -> EvalReport:
    """Score queries, derive the threshold, and attach metrics when labeled.

    ``labels`` marks anomalies with 1. Without labels the report carries
    scores and predictions only.
    """
    result = score(queries, reference, model, sample=sample, ratio=ratio, seed=seed)
    tau = threshold(reference_densities(reference, model), gamma_percentile)
    predictions = tuple(bool(s > tau) for s in result.scores)
    metrics: dict = {}
    if labels is not None:
        y = np.asarray(labels).ravel()
        if y.size != len(result.scores):
            raise ValidationError("one label per query required")
        metrics["auroc"] = auroc(result.scores, y)
        metrics["auprc"] = auprc(result.scores, y)
        metrics["fpr95"] = fpr95(result.scores, y)
        gap = result.densities[y == 0].mean() - result.densities[y == 1].mean()
        metrics["density_gap"] = float(gap)
    return EvalReport(
        scores=tuple(float(s) for s in result.scores),
        threshold=tau,
        predictions=predictions,
        **metrics,
    )


def save_report(path, report: EvalReport) -> None:
    with open(path, "w") as handle:
        json.dump(report.to_dict(), handle, sort_keys=True, indent=1)
        handle.write("\n")


def save_scores_csv(path, graph_ids, result: ScoreResult, predictions=None) -> None:
    """Per-graph score table: id, score, density, and optional prediction."""
    ids = list(graph_ids)
    if len(ids) != result.scores.size:
        raise ValidationError("one graph id per score required")
    header = "graph_id,score,density"
    if predictions is not None:
        header += ",prediction"
    lines = [header]
    for i, gid in enumerate(ids):
        row = f"{gid},{float(result.scores[i])!r},{float(result.densities[i])!r}"
        if predictions is not None:
            row += f",{int(predictions[i])}"
        lines.append(row)
    with open(path, "w") as handle:
        handle.write("\n".join(lines))
        handle.write("\n")
