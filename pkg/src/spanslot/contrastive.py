"""Contrastive pair construction and margin-gated encoder fine-tuning.

A pair item is the concatenation of the masked-sentence encoding and the
span-text encoding, computed separately.  Positive pairs share a non-None
label; negative pairs differ in label with at most one side unlabeled.
Training minimizes a margin-gated contrastive loss on the cosine distance:
only pairs on the wrong side of the margin contribute.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .encoders import Encoder, TrainableEncoder
from .errors import TrainingError
from .optim import AdamW
from .spans import SpanTriple

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"

Polarity = Literal["positive", "negative"]
GateMode = Literal["absolute", "batch_relative"]

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class CLPair:
    left: SpanTriple
    right: SpanTriple
    polarity: str

    def __post_init__(self) -> None:
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValueError(f"polarity must be positive/negative, got {self.polarity!r}")
        if self.left == self.right:
            raise ValueError("self-pairs are not allowed")
        ll, rl = self.left.label, self.right.label
        if self.polarity == POSITIVE:
            if ll is None or ll != rl:
                raise ValueError(
                    f"positive pair requires equal non-None labels, got {ll!r}/{rl!r}"
                )
        else:
            if ll == rl:
                raise ValueError(f"negative pair requires differing labels, got {ll!r} twice")
            if ll is None and rl is None:
                raise ValueError("negative pair cannot join two unlabeled spans")


@dataclass
class CLBatchLossReport:
    """Margin-filtered loss accounting for one batch of pairs."""

    total_loss: float
    hard_positive_count: int
    hard_negative_count: int
    pair_count: int


@dataclass
class Stage1Config:
    """Contrastive fine-tuning schedule (AdamW)."""

    margin: float = 0.5
    negatives_per_anchor: int = 1  # K; each positive pair draws 2K negatives
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    seed: int = 0
    gate_mode: str = "absolute"  # "batch_relative" is experimental, unevaluated

    def __post_init__(self) -> None:
        if not 0.0 < self.margin <= 1.0:
            raise ValueError(f"margin must be in (0, 1], got {self.margin}")
        if self.negatives_per_anchor < 1:
            raise ValueError("negatives_per_anchor must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.gate_mode not in ("absolute", "batch_relative"):
            raise ValueError(f"unknown gate_mode {self.gate_mode!r}")


def build_positive_pairs(triples: Sequence[SpanTriple]) -> list[CLPair]:
    """All unordered pairs of triples sharing a non-None label, each once."""
    if not triples:
        raise ValueError("triples must be non-empty")
    by_label: dict[str, list[int]] = {}
    for i, t in enumerate(triples):
        if t.label is not None:
            by_label.setdefault(t.label, []).append(i)
    pairs: list[CLPair] = []
    for label in sorted(by_label):
        idxs = by_label[label]
        for a in range(len(idxs)):
            for b in range(a + 1, len(idxs)):
                pairs.append(CLPair(triples[idxs[a]], triples[idxs[b]], POSITIVE))
    return pairs


def _eligible_partners(
    triples: Sequence[SpanTriple],
) -> dict[str, list[SpanTriple]]:
    """For each anchor label, the triples that may serve as negatives."""
    labels = sorted({t.label for t in triples if t.label is not None})
    return {
        label: [t for t in triples if t.label != label] for label in labels
    }


def sample_negative_pairs(
    triples: Sequence[SpanTriple],
    positives: Sequence[CLPair],
    k: int,
    seed: int,
) -> list[CLPair]:
    """Draw ``k`` negatives for each side of each positive pair.

    Draws are without replacement within one anchor's ``k`` picks when
    enough partners exist; partners may repeat across anchors.  Anchors
    with no eligible partner contribute fewer negatives and a warning.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = random.Random(seed)
    partners = _eligible_partners(triples)
    out: list[CLPair] = []
    starved = 0
    for pair in positives:
        for anchor in (pair.left, pair.right):
            pool = partners.get(anchor.label, [])
            if not pool:
                starved += 1
                continue
            if len(pool) < k:
                starved += 1
                picks = list(pool)
            else:
                picks = rng.sample(pool, k)
            out.extend(CLPair(anchor, partner, NEGATIVE) for partner in picks)
    if starved:
        log.warning(
            "%d anchor draws had fewer than %d eligible negative partners", starved, k
        )
    return out


def sample_one_to_one_pairs(triples: Sequence[SpanTriple], seed: int) -> list[CLPair]:
    """Balanced 1:1 regime: per positive pair, one anchor, one negative."""
    positives = build_positive_pairs(triples)
    rng = random.Random(seed)
    partners = _eligible_partners(triples)
    out: list[CLPair] = []
    starved = 0
    for pair in positives:
        out.append(pair)
        anchor = pair.left if rng.random() < 0.5 else pair.right
        pool = partners.get(anchor.label, [])
        if not pool:
            starved += 1
            continue
        out.append(CLPair(anchor, rng.choice(pool), NEGATIVE))
    if starved:
        log.warning("%d positive pairs could not be matched with a negative", starved)
    return out


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cosine similarity, in [0, 2]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    denom = max(float(np.linalg.norm(u) * np.linalg.norm(v)), _NORM_EPS)
    return 1.0 - float(np.dot(u, v)) / denom


def contrastive_loss(d: float, polarity: str, margin: float) -> float:
    """Margin-gated squared-distance loss for one pair.

    Positive pairs are penalized only when their distance exceeds the
    margin (hard positives); negative pairs only when below it.
    """
    if margin <= 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    if polarity == POSITIVE:
        return d * d if d > margin else 0.0
    if polarity == NEGATIVE:
        return (margin - d) ** 2 if d < margin else 0.0
    raise ValueError(f"polarity must be positive/negative, got {polarity!r}")


def encode_pair_item(encoder: Encoder, triple: SpanTriple) -> np.ndarray:
    """Concatenated encodings of masked text and span text: dimension 2D."""
    pair = encoder.encode_batch([triple.masked_text, triple.span_text])
    return np.concatenate([pair[0], pair[1]])


def encode_pair_items(
    encoder: Encoder, triples: Sequence[SpanTriple], batch_size: int = 128
) -> np.ndarray:
    """Batched :func:`encode_pair_item` over many triples: (N, 2D)."""
    if not triples:
        return np.zeros((0, 2 * encoder.dim), dtype=np.float64)
    out = np.empty((len(triples), 2 * encoder.dim), dtype=np.float64)
    for lo in range(0, len(triples), batch_size):
        chunk = triples[lo : lo + batch_size]
        masked = encoder.encode_batch([t.masked_text for t in chunk])
        spans = encoder.encode_batch([t.span_text for t in chunk])
        out[lo : lo + len(chunk)] = np.hstack([masked, spans])
    return out


def _pair_geometry(
    encoder: TrainableEncoder, pairs: Sequence[CLPair]
) -> tuple[np.ndarray, np.ndarray, list, np.ndarray, np.ndarray, np.ndarray]:
    """Forward pass for a batch of pairs; returns encodings, caches, distances."""
    lm, caches_lm = encoder.forward_batch([p.left.masked_text for p in pairs])
    ls, caches_ls = encoder.forward_batch([p.left.span_text for p in pairs])
    rm, caches_rm = encoder.forward_batch([p.right.masked_text for p in pairs])
    rs, caches_rs = encoder.forward_batch([p.right.span_text for p in pairs])
    u = np.hstack([lm, ls])
    v = np.hstack([rm, rs])
    nu = np.maximum(np.linalg.norm(u, axis=1), _NORM_EPS)
    nv = np.maximum(np.linalg.norm(v, axis=1), _NORM_EPS)
    sim = np.einsum("ij,ij->i", u, v) / (nu * nv)
    dist = 1.0 - sim
    caches = [caches_lm, caches_ls, caches_rm, caches_rs]
    return u, v, caches, nu, nv, dist


def _gated_losses(
    dist: np.ndarray, positive_mask: np.ndarray, margin: float, gate_mode: str
) -> np.ndarray:
    """Per-pair loss after the hard-example gate; zeros for easy pairs."""
    losses = np.zeros_like(dist)
    neg_mask = ~positive_mask
    if gate_mode == "absolute":
        hard_pos = positive_mask & (dist > margin)
        hard_neg = neg_mask & (dist < margin)
    else:
        # Experimental batch-relative gate: positives harder than the easiest
        # negative in the batch, negatives harder than the hardest positive.
        pos_thresh = dist[neg_mask].min() if neg_mask.any() else margin
        neg_thresh = dist[positive_mask].max() if positive_mask.any() else margin
        hard_pos = positive_mask & (dist > pos_thresh)
        hard_neg = neg_mask & (dist < neg_thresh)
    losses[hard_pos] = dist[hard_pos] ** 2
    losses[hard_neg] = np.maximum(margin - dist[hard_neg], 0.0) ** 2
    return losses


def _batch_loss_and_report(
    dist: np.ndarray,
    positive_mask: np.ndarray,
    margin: float,
    gate_mode: str,
) -> tuple[float, CLBatchLossReport, np.ndarray, int]:
    losses = _gated_losses(dist, positive_mask, margin, gate_mode)
    contributing = losses > 0.0
    hard_pos = int(np.count_nonzero(contributing & positive_mask))
    hard_neg = int(np.count_nonzero(contributing & ~positive_mask))
    n_hard = hard_pos + hard_neg
    total = float(losses.sum())
    mean = total / n_hard if n_hard else 0.0
    report = CLBatchLossReport(
        total_loss=total,
        hard_positive_count=hard_pos,
        hard_negative_count=hard_neg,
        pair_count=len(dist),
    )
    return mean, report, losses, n_hard


def stage1_batch_loss(
    encoder: TrainableEncoder,
    pairs: Sequence[CLPair],
    margin: float = 0.5,
    gate_mode: str = "absolute",
) -> tuple[float, CLBatchLossReport]:
    """Mean contrastive loss over the batch's hard pairs (pure, no update)."""
    *_, dist = _pair_geometry(encoder, pairs)
    positive_mask = np.array([p.polarity == POSITIVE for p in pairs])
    mean, report, _, _ = _batch_loss_and_report(dist, positive_mask, margin, gate_mode)
    return mean, report


def _backward_batch(
    encoder: TrainableEncoder,
    pairs: Sequence[CLPair],
    margin: float,
    gate_mode: str,
) -> tuple[float, CLBatchLossReport]:
    """Forward + gradient accumulation for one batch; grads are not applied."""
    u, v, caches, nu, nv, dist = _pair_geometry(encoder, pairs)
    positive_mask = np.array([p.polarity == POSITIVE for p in pairs])
    mean, report, losses, n_hard = _batch_loss_and_report(
        dist, positive_mask, margin, gate_mode
    )
    if n_hard == 0:
        return mean, report
    # dL/dd per pair, for the mean over contributing pairs.
    dldd = np.zeros_like(dist)
    contributing = losses > 0.0
    pos_c = contributing & positive_mask
    neg_c = contributing & ~positive_mask
    dldd[pos_c] = 2.0 * dist[pos_c] / n_hard
    dldd[neg_c] = -2.0 * (margin - dist[neg_c]) / n_hard
    # d(dist)/du = sim * u / |u|^2 - v / (|u||v|);  symmetric for v.
    sim = 1.0 - dist
    du = (sim / nu**2)[:, None] * u - v / (nu * nv)[:, None]
    dv = (sim / nv**2)[:, None] * v - u / (nu * nv)[:, None]
    du *= dldd[:, None]
    dv *= dldd[:, None]
    d = encoder.dim
    grad_slices = [du[:, :d], du[:, d:], dv[:, :d], dv[:, d:]]
    for cache, grad in zip(caches, grad_slices):
        encoder.backward_batch(cache, grad)
    return mean, report


def stage1_batch_gradients(
    encoder: TrainableEncoder,
    pairs: Sequence[CLPair],
    margin: float = 0.5,
    gate_mode: str = "absolute",
) -> dict[str, np.ndarray]:
    """Analytic gradient of :func:`stage1_batch_loss` w.r.t. encoder parameters."""
    encoder.zero_grads()
    _backward_batch(encoder, pairs, margin, gate_mode)
    return {k: g.copy() for k, g in encoder.grads().items()}


def train_stage1(
    encoder: TrainableEncoder,
    pairs: Sequence[CLPair],
    cfg: Stage1Config,
    log_path: str | Path | None = None,
) -> TrainableEncoder:
    """Fine-tune the encoder on contrastive pairs; returns the same encoder.

    Gradients flow through both the masked-text and span-text encodings of
    both pair members.  One JSON log line is written per epoch when
    ``log_path`` is given.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    if not isinstance(encoder, TrainableEncoder) or not encoder.trainable:
        raise TrainingError("stage-1 training requires a trainable encoder")
    opt = AdamW(
        encoder.parameters(),
        lr=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
    )
    rng = np.random.default_rng(cfg.seed)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(pairs))
            epoch_total = 0.0
            epoch_hard_pos = 0
            epoch_hard_neg = 0
            for lo in range(0, len(order), cfg.batch_size):
                batch = [pairs[i] for i in order[lo : lo + cfg.batch_size]]
                encoder.zero_grads()
                mean, report = _backward_batch(encoder, batch, cfg.margin, cfg.gate_mode)
                if not np.isfinite(mean):
                    raise TrainingError(
                        f"non-finite contrastive loss at epoch {epoch}, "
                        f"batch starting at {lo}: {mean}"
                    )
                epoch_total += report.total_loss
                epoch_hard_pos += report.hard_positive_count
                epoch_hard_neg += report.hard_negative_count
                if report.hard_positive_count + report.hard_negative_count:
                    opt.step(encoder.grads())
            n_hard = epoch_hard_pos + epoch_hard_neg
            mean_loss = epoch_total / n_hard if n_hard else 0.0
            if n_hard == 0:
                log.warning("epoch %d: no hard pairs in any batch; no-op epoch", epoch)
            log.info(
                "stage1 epoch %d: mean_loss=%.6f hard_pos=%d hard_neg=%d",
                epoch,
                mean_loss,
                epoch_hard_pos,
                epoch_hard_neg,
            )
            if log_fh is not None:
                log_fh.write(
                    json.dumps(
                        {
                            "epoch": epoch,
                            "mean_loss": mean_loss,
                            "hard_pos": epoch_hard_pos,
                            "hard_neg": epoch_hard_neg,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    finally:
        if log_fh is not None:
            log_fh.close()
    return encoder


def stage1_config_for_seed(cfg: Stage1Config, seed: int) -> Stage1Config:
    return replace(cfg, seed=seed)


# --- pair serialization ----------------------------------------------------

def write_pairs_jsonl(path: str | Path, pairs: Iterable[CLPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            record = {
                "left_ref": list(p.left.ref),
                "right_ref": list(p.right.ref),
                "polarity": p.polarity,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_pairs_jsonl(path: str | Path, triples: Sequence[SpanTriple]) -> list[CLPair]:
    by_ref = {t.ref: t for t in triples}
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            left = by_ref[tuple(record["left_ref"])]
            right = by_ref[tuple(record["right_ref"])]
            out.append(CLPair(left, right, record["polarity"]))
    return out
