"""Standard token-classification baseline: per-token tagging head.

A linear head over a token-level encoder maps each word representation to
the full BIO tagset; encoder and head train end-to-end with Adam.  The
word-level reference encoder aligns one representation per whitespace
token; subdividing backends must expose first-subunit alignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifiers import cross_entropy, softmax
from .corpus import O_TAG, Corpus, SlotOntology, Utterance, validate_bio
from .encoders import ToyEncoder
from .errors import TrainingError
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TokenBaselineConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-5
    weight_decay: float = 0.01


def make_tagset(ontology: SlotOntology) -> tuple[str, ...]:
    """O first, then B-/I- per slot type in ontology order: 2*N_s + 1 tags."""
    tags = [O_TAG]
    for slot_type in ontology.slot_types:
        tags.append(f"B-{slot_type}")
        tags.append(f"I-{slot_type}")
    return tuple(tags)


class TokenTaggerModel:
    """Token encoder plus a linear tagging head."""

    def __init__(self, encoder: ToyEncoder, tagset: Sequence[str], seed: int = 0):
        self.encoder = encoder
        self.tagset = tuple(tagset)
        self._tag_index = {t: i for i, t in enumerate(self.tagset)}
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(encoder.dim)
        self.head_w = rng.uniform(-bound, bound, (encoder.dim, len(self.tagset)))
        self.head_b = rng.uniform(-bound, bound, len(self.tagset))
        self.history: list[dict] = []

    @property
    def n_tags(self) -> int:
        return len(self.tagset)

    def tag_ids(self, labels: Sequence[str]) -> np.ndarray:
        return np.asarray([self._tag_index[t] for t in labels], dtype=np.int64)

    def token_logits(self, utterance: Utterance) -> np.ndarray:
        reps = self.encoder.encode_tokens(utterance.tokens)
        if reps.shape[0] != len(utterance):
            raise TrainingError(
                f"utterance {utterance.id!r}: encoder produced {reps.shape[0]} "
                f"representations for {len(utterance)} tokens"
            )
        return reps @ self.head_w + self.head_b

    def parameters(self) -> dict[str, np.ndarray]:
        return {"head_w": self.head_w, "head_b": self.head_b}


def train_token_baseline(
    token_encoder: ToyEncoder,
    corpus: Corpus,
    schedule: TokenBaselineConfig,
    seed: int,
    initial: TokenTaggerModel | None = None,
) -> TokenTaggerModel:
    """Cross-entropy over token tags for a fixed number of epochs."""
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if initial is not None:
        model = initial
        if model.encoder is not token_encoder:
            raise TrainingError("continued training must reuse the model's encoder")
    else:
        model = TokenTaggerModel(token_encoder, make_tagset(corpus.ontology), seed=seed)
    params = dict(model.parameters())
    params.update(token_encoder.parameters())
    opt = Adam(params, lr=schedule.learning_rate, weight_decay=schedule.weight_decay)
    rng = np.random.default_rng(seed)
    utts = list(corpus.utterances)
    for epoch in range(schedule.epochs):
        order = rng.permutation(len(utts))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(order), schedule.batch_size):
            batch = [utts[i] for i in order[lo : lo + schedule.batch_size]]
            reps_list, ids_list, targets = [], [], []
            for utt in batch:
                reps, ids = token_encoder.forward_tokens(utt.tokens)
                if reps.shape[0] != len(utt):
                    raise TrainingError(
                        f"utterance {utt.id!r}: encoder produced {reps.shape[0]} "
                        f"representations for {len(utt)} tokens"
                    )
                reps_list.append(reps)
                ids_list.append(ids)
                targets.append(model.tag_ids(utt.labels))
            reps_all = np.vstack(reps_list)
            y = np.concatenate(targets)
            logits = reps_all @ model.head_w + model.head_b
            loss, dlogits = cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}: {loss}")
            grads = {
                "head_w": reps_all.T @ dlogits,
                "head_b": dlogits.sum(axis=0),
            }
            dreps = dlogits @ model.head_w.T
            token_encoder.zero_grads()
            offset = 0
            for ids in ids_list:
                token_encoder.backward_tokens(ids, dreps[offset : offset + len(ids)])
                offset += len(ids)
            grads.update(token_encoder.grads())
            opt.step(grads)
            epoch_loss += loss
            n_batches += 1
        model.history.append({"epoch": epoch, "mean_loss": epoch_loss / n_batches})
    return model


def repair_bio(labels: Sequence[str]) -> list[str]:
    """Rewrite invalid I- openers/type switches to B-; valid tags untouched."""
    repaired = list(labels)
    open_type: str | None = None
    for i, tag in enumerate(repaired):
        if tag == O_TAG:
            open_type = None
            continue
        kind, slot_type = tag[0], tag[2:]
        if kind == "I" and open_type != slot_type:
            repaired[i] = f"B-{slot_type}"
        open_type = slot_type
    return repaired


def predict_tags(model: TokenTaggerModel, utterance: Utterance) -> list[str]:
    """Per-token argmax followed by BIO repair; output always validates."""
    probs = softmax(model.token_logits(utterance))
    raw = [model.tagset[i] for i in np.argmax(probs, axis=1)]
    labels = repair_bio(raw)
    assert not validate_bio(labels)
    return labels
