"""Token-level micro-F1 and silhouette cluster coherence.

F1 counts exclude O tokens from tp/fp/fn (standard slot-F1 practice): a
token is a true positive iff gold and predicted tags are equal and non-O.
Silhouette uses cosine distance, consistent with the contrastive space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import O_TAG

_NORM_EPS = 1e-12


@dataclass
class F1Report:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_type: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_type": self.per_type,
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def token_micro_f1(
    gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]
) -> F1Report:
    """Micro-averaged precision/recall/F1 over non-O token tags."""
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sequences, pred has {len(pred)}")
    tp = fp = fn = 0
    per_type: dict[str, dict] = {}

    def bucket(tag: str) -> dict:
        slot_type = tag[2:]
        return per_type.setdefault(slot_type, {"tp": 0, "fp": 0, "fn": 0})

    for i, (g_seq, p_seq) in enumerate(zip(gold, pred)):
        if len(g_seq) != len(p_seq):
            raise ValueError(
                f"sequence {i}: gold has {len(g_seq)} tags, pred has {len(p_seq)}"
            )
        for g, p in zip(g_seq, p_seq):
            if g != O_TAG and g == p:
                tp += 1
                bucket(g)["tp"] += 1
            else:
                if p != O_TAG:
                    fp += 1
                    bucket(p)["fp"] += 1
                if g != O_TAG:
                    fn += 1
                    bucket(g)["fn"] += 1

    precision, recall, f1 = _prf(tp, fp, fn)
    breakdown = {}
    for slot_type in sorted(per_type):
        c = per_type[slot_type]
        t_p, t_r, t_f = _prf(c["tp"], c["fp"], c["fn"])
        breakdown[slot_type] = {
            "tp": c["tp"],
            "fp": c["fp"],
            "fn": c["fn"],
            "precision": t_p,
            "recall": t_r,
            "f1": t_f,
        }
    return F1Report(precision, recall, f1, tp, fp, fn, breakdown)


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    norms = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), _NORM_EPS)
    unit = x / norms
    dist = 1.0 - unit @ unit.T
    np.fill_diagonal(dist, 0.0)
    return dist


def silhouette_score(vectors: np.ndarray, labels: Sequence) -> float:
    """Mean silhouette coefficient under cosine distance.

    Per point: a is the mean distance to its own cluster (excluding
    itself), b the minimum over other clusters of the mean distance;
    the point scores (b - a) / max(a, b).  Singleton clusters score 0.
    """
    x = np.asarray(vectors, dtype=np.float64)
    labels = list(labels)
    if x.shape[0] != len(labels):
        raise ValueError("vectors and labels disagree in length")
    unique = sorted(set(labels), key=lambda v: str(v))
    if len(unique) < 2:
        raise ValueError("silhouette is undefined for fewer than 2 clusters")
    dist = cosine_distance_matrix(x)
    onehot = np.zeros((len(labels), len(unique)))
    col = {lab: j for j, lab in enumerate(unique)}
    for i, lab in enumerate(labels):
        onehot[i, col[lab]] = 1.0
    sizes = onehot.sum(axis=0)  # (k,)
    sums = dist @ onehot  # (n, k): sum of distances to each cluster
    own = np.array([col[lab] for lab in labels])
    scores = np.zeros(len(labels))
    for i in range(len(labels)):
        c = own[i]
        if sizes[c] <= 1:
            continue  # singleton contributes 0
        a = sums[i, c] / (sizes[c] - 1)
        other = [sums[i, j] / sizes[j] for j in range(len(unique)) if j != c]
        b = min(other)
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())
