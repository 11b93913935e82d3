"""Binary span filtering and multi-class slot typing over pair encodings.

Both classifiers are plain feed-forward networks with rectified hidden
layers and a softmax cross-entropy objective, trained with Adam for a
fixed number of epochs (no early stopping).  The encoder is frozen while
they train; an experimental joint mode backpropagates into it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import SlotOntology
from .encoders import Encoder, TrainableEncoder
from .errors import CheckpointError, TrainingError
from .optim import Adam
from .spans import SpanTriple

log = logging.getLogger(__name__)

STEP1_HIDDEN_DIMS = (2500, 1500)
STEP2_HIDDEN_DIMS = (3600, 2400, 800)

BINARY_CLASS_NAMES = ("no-slot", "slot")

MLP_MANIFEST_NAME = "manifest.json"
MLP_PARAMS_BLOB = "params.npz"


@dataclass
class FilterConfig:
    """Stage 2 Step 1: the binary is-this-a-slot-value filter."""

    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-5
    weight_decay: float = 0.0
    threshold: float = 0.5
    hidden_dims: tuple[int, ...] = STEP1_HIDDEN_DIMS

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        _check_schedule(self)


@dataclass
class TyperConfig:
    """Stage 2 Step 2: the multi-class slot-type classifier."""

    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-5
    weight_decay: float = 0.0
    hidden_dims: tuple[int, ...] = STEP2_HIDDEN_DIMS

    def __post_init__(self) -> None:
        _check_schedule(self)


def _check_schedule(cfg) -> None:
    if cfg.epochs < 0:
        raise ValueError("epochs must be >= 0")
    if cfg.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if any(h < 1 for h in cfg.hidden_dims):
        raise ValueError("hidden dims must be positive")


@dataclass
class Stage2Config:
    step1: FilterConfig = field(default_factory=FilterConfig)
    step2: TyperConfig = field(default_factory=TyperConfig)
    include_none_class: bool = False
    none_cap_per_sentence: int | None = None  # desk-scale speed knob, off by default
    finetune_encoder: bool = False  # experimental; no fidelity claimed
    seed: int = 0


@dataclass
class VectorDataset:
    features: np.ndarray  # (N, 2D) pair encodings
    labels: np.ndarray  # (N,) class indices
    class_names: tuple[str | None, ...]

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree in length")

    def __len__(self) -> int:
        return len(self.labels)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class MLPModel:
    """Feed-forward classifier; weights are (fan_in, fan_out) matrices."""

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        class_names: Sequence[str | None],
    ) -> None:
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.class_names = tuple(class_names)
        if self.weights[-1].shape[1] != len(self.class_names):
            raise ValueError("output layer width must equal the number of classes")
        self.history: list[dict] = []

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        hidden_dims: Sequence[int],
        class_names: Sequence[str | None],
        seed: int,
    ) -> "MLPModel":
        """Seeded uniform fan-in initialization."""
        dims = [input_dim, *hidden_dims, len(class_names)]
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims, dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, fan_out))
        return cls(weights, biases, class_names)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *(w.shape[1] for w in self.weights))

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def clone(self) -> "MLPModel":
        return MLPModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.class_names,
        )

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValueError(
                f"input dim {x.shape[-1]} does not match model input {self.input_dim}"
            )
        return x

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Logits plus the post-activation cache used by backprop."""
        x = self._check_input(np.atleast_2d(x))
        activations = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = relu(h @ w + b)
            activations.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]
        return logits, activations

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def backward(
        self, activations: list[np.ndarray], dlogits: np.ndarray
    ) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        delta = dlogits
        for layer in range(len(self.weights) - 1, -1, -1):
            grads[f"w{layer}"] = activations[layer].T @ delta
            grads[f"b{layer}"] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (activations[layer] > 0.0)
        return grads

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"w{i}"] = w
            params[f"b{i}"] = b
        return params


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    probs = softmax(logits)
    n = len(targets)
    picked = np.clip(probs[np.arange(n), targets], 1e-300, None)
    loss = float(-np.log(picked).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits /= n
    return loss, dlogits


# --- training-set construction ----------------------------------------------

def _cap_none_triples(
    triples: Sequence[SpanTriple], cap: int | None, seed: int
) -> list[SpanTriple]:
    """Optionally keep at most ``cap`` unlabeled spans per source sentence."""
    if cap is None:
        return list(triples)
    rng = random.Random(seed)
    none_by_source: dict[str, list[int]] = {}
    for i, t in enumerate(triples):
        if t.label is None:
            none_by_source.setdefault(t.source_id, []).append(i)
    keep: set[int] = set()
    for source in sorted(none_by_source):
        idxs = none_by_source[source]
        keep.update(idxs if len(idxs) <= cap else rng.sample(idxs, cap))
    return [t for i, t in enumerate(triples) if t.label is not None or i in keep]


def step1_examples(
    triples: Sequence[SpanTriple],
    *,
    none_cap_per_sentence: int | None = None,
    seed: int = 0,
) -> tuple[list[SpanTriple], np.ndarray]:
    """Binary targets: 1 for spans matching a gold slot value, else 0."""
    kept = _cap_none_triples(triples, none_cap_per_sentence, seed)
    labels = np.asarray([0 if t.label is None else 1 for t in kept], dtype=np.int64)
    if labels.sum() == 0:
        raise ValueError("no positive spans: the binary filter is untrainable")
    return kept, labels


def build_step1_training_set(
    triples: Sequence[SpanTriple],
    encoder: Encoder,
    *,
    none_cap_per_sentence: int | None = None,
    seed: int = 0,
    batch_size: int = 128,
) -> VectorDataset:
    from .contrastive import encode_pair_items

    kept, labels = step1_examples(
        triples, none_cap_per_sentence=none_cap_per_sentence, seed=seed
    )
    features = encode_pair_items(encoder, kept, batch_size)
    return VectorDataset(features, labels, BINARY_CLASS_NAMES)


def step2_examples(
    triples: Sequence[SpanTriple],
    ontology: SlotOntology,
    include_none: bool,
    *,
    none_cap_per_sentence: int | None = None,
    seed: int = 0,
) -> tuple[list[SpanTriple], np.ndarray, tuple[str | None, ...]]:
    """Slot-type targets; classes follow ontology order, no-slot class last.

    Slot types with zero examples stay in the class map (they may simply
    never be predicted).
    """
    class_names = ontology.class_names(include_none=include_none)
    index = {name: i for i, name in enumerate(class_names)}
    if include_none:
        kept = _cap_none_triples(triples, none_cap_per_sentence, seed)
    else:
        kept = [t for t in triples if t.label is not None]
    if not kept:
        raise ValueError("empty training set for the slot-type classifier")
    labels = np.asarray([index[t.label] for t in kept], dtype=np.int64)
    return kept, labels, class_names


def build_step2_training_set(
    triples: Sequence[SpanTriple],
    encoder: Encoder,
    ontology: SlotOntology,
    include_none: bool,
    *,
    none_cap_per_sentence: int | None = None,
    seed: int = 0,
    batch_size: int = 128,
) -> VectorDataset:
    from .contrastive import encode_pair_items

    kept, labels, class_names = step2_examples(
        triples,
        ontology,
        include_none,
        none_cap_per_sentence=none_cap_per_sentence,
        seed=seed,
    )
    features = encode_pair_items(encoder, kept, batch_size)
    return VectorDataset(features, labels, class_names)


# --- training ----------------------------------------------------------------

def train_mlp(
    dataset: VectorDataset,
    hidden_dims: Sequence[int],
    schedule,
    seed: int,
    initial: MLPModel | None = None,
) -> MLPModel:
    """Fixed-epoch cross-entropy training; returns the final-epoch model.

    ``schedule`` provides epochs/batch_size/learning_rate/weight_decay.
    With ``initial`` given, training continues from that model's weights.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if initial is not None:
        model = initial.clone()
        if model.input_dim != dataset.features.shape[1]:
            raise ValueError("initial model input dim does not match the dataset")
    else:
        model = MLPModel.initialize(
            dataset.features.shape[1], tuple(hidden_dims), dataset.class_names, seed
        )
    if len(np.unique(dataset.labels)) < 2:
        log.warning(
            "single-class dataset: training a degenerate constant classifier"
        )
    opt = Adam(
        model.parameters(),
        lr=schedule.learning_rate,
        weight_decay=schedule.weight_decay,
    )
    rng = np.random.default_rng(seed)
    n = len(dataset)
    for epoch in range(schedule.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n, schedule.batch_size):
            idx = order[lo : lo + schedule.batch_size]
            x = dataset.features[idx]
            y = dataset.labels[idx]
            logits, activations = model.forward(x)
            loss, dlogits = cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}: {loss}")
            opt.step(model.backward(activations, dlogits))
            epoch_loss += loss
            n_batches += 1
        model.history.append({"epoch": epoch, "mean_loss": epoch_loss / n_batches})
    return model


def train_stage2_joint(
    triples: Sequence[SpanTriple],
    targets: np.ndarray,
    class_names: Sequence[str | None],
    encoder: TrainableEncoder,
    hidden_dims: Sequence[int],
    schedule,
    seed: int,
) -> MLPModel:
    """Experimental: backpropagate the classifier loss into the encoder.

    Both the classifier and the encoder train with the same schedule; the
    default pipeline keeps the encoder frozen instead.
    """
    if not triples:
        raise ValueError("dataset is empty")
    if not encoder.trainable:
        raise TrainingError("joint training requires a trainable encoder")
    targets = np.asarray(targets, dtype=np.int64)
    model = MLPModel.initialize(2 * encoder.dim, tuple(hidden_dims), class_names, seed)
    opt_mlp = Adam(model.parameters(), lr=schedule.learning_rate,
                   weight_decay=schedule.weight_decay)
    opt_enc = Adam(encoder.parameters(), lr=schedule.learning_rate,
                   weight_decay=schedule.weight_decay)
    rng = np.random.default_rng(seed)
    n = len(triples)
    d = encoder.dim
    for epoch in range(schedule.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n, schedule.batch_size):
            idx = order[lo : lo + schedule.batch_size]
            batch = [triples[i] for i in idx]
            masked, cache_m = encoder.forward_batch([t.masked_text for t in batch])
            spans, cache_s = encoder.forward_batch([t.span_text for t in batch])
            x = np.hstack([masked, spans])
            logits, activations = model.forward(x)
            loss, dlogits = cross_entropy(logits, targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}: {loss}")
            grads = model.backward(activations, dlogits)
            dx = dlogits @ model.weights[-1].T
            for layer in range(len(model.weights) - 2, -1, -1):
                dx = (dx * (activations[layer + 1] > 0.0)) @ model.weights[layer].T
            encoder.zero_grads()
            encoder.backward_batch(cache_m, dx[:, :d])
            encoder.backward_batch(cache_s, dx[:, d:])
            opt_mlp.step(grads)
            opt_enc.step(encoder.grads())
            epoch_loss += loss
            n_batches += 1
        model.history.append({"epoch": epoch, "mean_loss": epoch_loss / n_batches})
    return model


# --- prediction ----------------------------------------------------------------

def predict_binary(
    model: MLPModel, vector: np.ndarray, threshold: float = 0.5
) -> tuple[int, float]:
    """1 iff the positive-class probability reaches the threshold (inclusive)."""
    if model.n_classes != 2:
        raise ValueError("predict_binary requires a 2-class model")
    probs = model.predict_proba(np.atleast_2d(vector))[0]
    score = float(probs[1])
    return (1 if score >= threshold else 0), score


def predict_slot_type(model: MLPModel, vector: np.ndarray) -> tuple[str | None, float]:
    """Argmax class (ties -> lowest index) with its softmax probability."""
    probs = model.predict_proba(np.atleast_2d(vector))[0]
    idx = int(np.argmax(probs))
    return model.class_names[idx], float(probs[idx])


# --- checkpoints ----------------------------------------------------------------

def save_classifier(
    model: MLPModel,
    path: str | Path,
    *,
    encoder_name: str,
    encoder_dim: int,
    threshold: float | None = None,
) -> dict:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    blob_path = path / MLP_PARAMS_BLOB
    np.savez(blob_path, **arrays)
    digest = hashlib.sha256(blob_path.read_bytes()).hexdigest()
    manifest = {
        "arch": list(model.layer_dims),
        "class_map": list(model.class_names),
        "encoder_name": encoder_name,
        "encoder_dim": int(encoder_dim),
        "threshold": threshold,
        "blobs": {MLP_PARAMS_BLOB: digest},
    }
    (path / MLP_MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8"
    )
    return manifest


def load_classifier(path: str | Path) -> tuple[MLPModel, dict]:
    path = Path(path)
    manifest_path = path / MLP_MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    blob_path = path / MLP_PARAMS_BLOB
    if not blob_path.exists():
        raise CheckpointError(f"missing checkpoint blob: {blob_path}")
    digest = hashlib.sha256(blob_path.read_bytes()).hexdigest()
    if digest != manifest["blobs"][MLP_PARAMS_BLOB]:
        raise CheckpointError(f"checkpoint blob {blob_path} is corrupt: hash mismatch")
    with np.load(blob_path) as npz:
        n_layers = sum(1 for k in npz.files if k.startswith("w"))
        weights = [npz[f"w{i}"] for i in range(n_layers)]
        biases = [npz[f"b{i}"] for i in range(n_layers)]
    model = MLPModel(weights, biases, manifest["class_map"])
    if list(model.layer_dims) != manifest["arch"]:
        raise CheckpointError("parameter shapes do not match the manifest arch")
    return model, manifest
