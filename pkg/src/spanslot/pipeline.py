"""End-to-end span labeling: enumerate, filter, classify, reconstruct.

Every candidate span of an utterance is encoded as a pair item; the
optional binary filter discards spans predicted to carry no slot value,
the slot-type classifier labels the survivors, conflicting spans are
resolved greedily by confidence, and the winners are written back as a
valid BIO sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classifiers import MLPModel
from .contrastive import encode_pair_items
from .corpus import O_TAG, Corpus, Utterance
from .encoders import Encoder
from .errors import ConfigError
from .spans import DEFAULT_MASK_TOKEN, DEFAULT_MAX_SPAN, Span, make_triples

__all__ = [
    "SlotPrediction",
    "PipelineConfig",
    "SpanPredictionResult",
    "UtterancePrediction",
    "predict_spans",
    "resolve_overlaps",
    "reconstruct_bio",
    "predict_utterance",
    "predict_corpus",
    "write_predictions_jsonl",
    "read_predictions_jsonl",
]


@dataclass(frozen=True)
class SlotPrediction:
    span: Span
    slot_type: str
    confidence: float
    filtered_in: bool


@dataclass
class PipelineConfig:
    use_step1_filter: bool = True
    max_sp: int = DEFAULT_MAX_SPAN
    mask_token: str = DEFAULT_MASK_TOKEN
    overlap_policy: str = "confidence_greedy"
    batch_size: int = 128
    step1_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.overlap_policy != "confidence_greedy":
            raise ConfigError(f"unknown overlap policy {self.overlap_policy!r}")


@dataclass
class SpanPredictionResult:
    predictions: list[SlotPrediction]
    step2_invocations: int


@dataclass
class UtterancePrediction:
    utterance_id: str
    tokens: tuple[str, ...]
    labels: list[str]
    spans: list[SlotPrediction]
    step2_invocations: int


def _check_model_dim(model: MLPModel, encoder: Encoder, role: str) -> None:
    expected = 2 * encoder.dim
    if model.input_dim != expected:
        raise ConfigError(
            f"{role} expects input dim {model.input_dim}, but the encoder "
            f"produces pair encodings of dim {expected}"
        )


def predict_spans(
    encoder: Encoder,
    step1_model: MLPModel | None,
    step2_model: MLPModel,
    utterance: Utterance,
    cfg: PipelineConfig,
) -> SpanPredictionResult:
    """Classify every candidate span of one utterance.

    With filtering on, only spans the binary filter accepts reach the
    slot-type classifier; its invocation count is reported alongside the
    predictions.  ``None``-class predictions are dropped.
    """
    if cfg.use_step1_filter and step1_model is None:
        raise ConfigError("use_step1_filter=True requires a step-1 model")
    _check_model_dim(step2_model, encoder, "step-2 classifier")
    if step1_model is not None:
        _check_model_dim(step1_model, encoder, "step-1 filter")

    triples = make_triples(utterance, "all_spans", cfg.max_sp, cfg.mask_token)
    features = encode_pair_items(encoder, triples, cfg.batch_size)

    if cfg.use_step1_filter:
        probs1 = step1_model.predict_proba(features)
        keep = probs1[:, 1] >= cfg.step1_threshold
    else:
        keep = np.ones(len(triples), dtype=bool)

    survivor_idx = np.flatnonzero(keep)
    if survivor_idx.size == 0:
        return SpanPredictionResult([], 0)

    probs2 = step2_model.predict_proba(features[survivor_idx])
    best = np.argmax(probs2, axis=1)
    predictions: list[SlotPrediction] = []
    for pos, row in enumerate(survivor_idx):
        slot_type = step2_model.class_names[best[pos]]
        if slot_type is None:
            continue
        predictions.append(
            SlotPrediction(
                span=triples[row].span,
                slot_type=slot_type,
                confidence=float(probs2[pos, best[pos]]),
                filtered_in=True,
            )
        )
    return SpanPredictionResult(predictions, int(survivor_idx.size))


def resolve_overlaps(predictions: Sequence[SlotPrediction]) -> list[SlotPrediction]:
    """Greedy selection by descending confidence; overlapping spans drop.

    Ties break by earlier start, then shorter span, then slot type in
    ontology (lexicographic) order.
    """
    ranked = sorted(
        predictions,
        key=lambda p: (-p.confidence, p.span.start, p.span.length, p.slot_type),
    )
    selected: list[SlotPrediction] = []
    for cand in ranked:
        if all(not cand.span.overlaps(kept.span) for kept in selected):
            selected.append(cand)
    selected.sort(key=lambda p: p.span.start)
    return selected


def reconstruct_bio(
    utterance: Utterance, selections: Sequence[SlotPrediction]
) -> list[str]:
    """Fill selected spans with B/I tags of their type; everything else O."""
    n = len(utterance)
    labels = [O_TAG] * n
    occupied = [False] * n
    for pred in selections:
        span = pred.span
        if span.stop > n:
            raise ValueError(f"span {span} out of range for {n} tokens")
        if any(occupied[span.start : span.stop]):
            raise ValueError(
                f"overlapping selection at span {span}; run resolve_overlaps first"
            )
        for i in range(span.start, span.stop):
            occupied[i] = True
        labels[span.start] = f"B-{pred.slot_type}"
        for i in range(span.start + 1, span.stop):
            labels[i] = f"I-{pred.slot_type}"
    return labels


def predict_utterance(
    encoder: Encoder,
    step1_model: MLPModel | None,
    step2_model: MLPModel,
    utterance: Utterance,
    cfg: PipelineConfig,
) -> UtterancePrediction:
    result = predict_spans(encoder, step1_model, step2_model, utterance, cfg)
    selections = resolve_overlaps(result.predictions)
    labels = reconstruct_bio(utterance, selections)
    return UtterancePrediction(
        utterance_id=utterance.id,
        tokens=utterance.tokens,
        labels=labels,
        spans=selections,
        step2_invocations=result.step2_invocations,
    )


def predict_corpus(
    encoder: Encoder,
    step1_model: MLPModel | None,
    step2_model: MLPModel,
    corpus: Corpus | Iterable[Utterance],
    cfg: PipelineConfig,
) -> list[UtterancePrediction]:
    return [
        predict_utterance(encoder, step1_model, step2_model, utt, cfg)
        for utt in corpus
    ]


def prediction_to_dict(pred: UtterancePrediction) -> dict:
    return {
        "id": pred.utterance_id,
        "tokens": list(pred.tokens),
        "predicted_labels": list(pred.labels),
        "spans": [
            {
                "start": s.span.start,
                "length": s.span.length,
                "type": s.slot_type,
                "confidence": s.confidence,
            }
            for s in pred.spans
        ],
        "step2_invocations": pred.step2_invocations,
    }


def write_predictions_jsonl(
    path: str | Path, predictions: Iterable[UtterancePrediction]
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(prediction_to_dict(pred), sort_keys=True) + "\n")


def read_predictions_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
