"""Pluggable sentence encoders, checkpointing, and a trainable reference encoder.

Real pretrained multilingual encoders attach through the :class:`Encoder`
contract and ``register_encoder``; this package only defines the interface.
The bundled :class:`ToyEncoder` is a trainable word-embedding lookup with
mean pooling, small enough for CPU-only end-to-end runs and exact gradient
checks, with a reserved mask-token embedding.
"""

from __future__ import annotations

import abc
import hashlib
import json
from pathlib import Path
from typing import Any, ClassVar, Iterable, Sequence

import numpy as np

from .errors import CheckpointError

UNK_TOKEN = "<unk>"

MANIFEST_NAME = "manifest.json"
PARAMS_BLOB = "params.npz"


class Encoder(abc.ABC):
    """Text -> fixed-dimensional vector, batched and order-preserving."""

    kind: ClassVar[str] = "abstract"

    def __init__(self, name: str, dim: int, trainable: bool) -> None:
        self.name = name
        self.dim = int(dim)
        self.trainable = bool(trainable)

    def encode(self, text: str) -> np.ndarray:
        return self.encode_batch([text])[0]

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        """Encode ``texts`` into an ``(len(texts), dim)`` float array."""
        texts = list(texts)
        if not texts:
            raise ValueError("texts must be non-empty")
        for i, text in enumerate(texts):
            if not isinstance(text, str) or not text.strip():
                raise ValueError(f"text {i} is empty")
        return self._encode_batch(texts)

    @abc.abstractmethod
    def _encode_batch(self, texts: list[str]) -> np.ndarray: ...

    # Checkpoint protocol: arbitrary named arrays plus JSON-safe metadata.
    @abc.abstractmethod
    def checkpoint_arrays(self) -> dict[str, np.ndarray]: ...

    @abc.abstractmethod
    def checkpoint_meta(self) -> dict[str, Any]: ...

    @classmethod
    @abc.abstractmethod
    def from_checkpoint(cls, manifest: dict, arrays: dict[str, np.ndarray]) -> "Encoder": ...


class TrainableEncoder(Encoder):
    """Encoder exposing the hooks the contrastive trainer needs."""

    @abc.abstractmethod
    def forward_batch(self, texts: Sequence[str]) -> tuple[np.ndarray, Any]:
        """Like ``encode_batch`` but also returns a backprop cache."""

    @abc.abstractmethod
    def backward_batch(self, cache: Any, grad_out: np.ndarray) -> None:
        """Accumulate parameter gradients for one forward cache."""

    @abc.abstractmethod
    def parameters(self) -> dict[str, np.ndarray]: ...

    @abc.abstractmethod
    def grads(self) -> dict[str, np.ndarray]: ...

    @abc.abstractmethod
    def zero_grads(self) -> None: ...


ENCODER_KINDS: dict[str, type[Encoder]] = {}


def register_encoder(cls: type[Encoder]) -> type[Encoder]:
    """Class decorator registering an encoder kind for checkpoint loading."""
    if not getattr(cls, "kind", None) or cls.kind == "abstract":
        raise ValueError(f"{cls.__name__} must define a concrete 'kind'")
    ENCODER_KINDS[cls.kind] = cls
    return cls


@register_encoder
class ToyEncoder(TrainableEncoder):
    """Trainable word-embedding lookup with mean pooling.

    Sentence vectors are the mean of the token embeddings; per-token
    representations are also exposed for token-level taggers (words map
    one-to-one to representations, so alignment is trivial).  Unknown words
    share a single ``<unk>`` row.
    """

    kind = "toy"

    def __init__(
        self,
        vocab: Sequence[str],
        dim: int = 32,
        seed: int = 0,
        name: str = "toy",
        mask_token: str = "[MASK]",
        embeddings: np.ndarray | None = None,
        trainable: bool = True,
    ) -> None:
        super().__init__(name=name, dim=dim, trainable=trainable)
        self.vocab = tuple(vocab)
        if UNK_TOKEN not in self.vocab:
            raise ValueError(f"vocab must contain the reserved {UNK_TOKEN!r} token")
        if mask_token not in self.vocab:
            raise ValueError(f"vocab must contain the mask token {mask_token!r}")
        self.mask_token = mask_token
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        self._unk_id = self._index[UNK_TOKEN]
        if embeddings is None:
            rng = np.random.default_rng(seed)
            embeddings = rng.normal(0.0, 1.0 / np.sqrt(dim), (len(self.vocab), dim))
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        if self.embeddings.shape != (len(self.vocab), dim):
            raise ValueError(
                f"embeddings shape {self.embeddings.shape} does not match "
                f"vocab={len(self.vocab)}, dim={dim}"
            )
        self._grad = np.zeros_like(self.embeddings)

    @classmethod
    def fit(
        cls,
        texts: Iterable[str],
        dim: int = 32,
        seed: int = 0,
        name: str = "toy",
        mask_token: str = "[MASK]",
    ) -> "ToyEncoder":
        """Build the vocabulary from unlabeled text and initialize embeddings."""
        words = sorted({w for text in texts for w in text.split()})
        vocab = [UNK_TOKEN, mask_token] + [w for w in words if w not in (UNK_TOKEN, mask_token)]
        return cls(vocab, dim=dim, seed=seed, name=name, mask_token=mask_token)

    def token_ids(self, text: str) -> np.ndarray:
        ids = [self._index.get(w, self._unk_id) for w in text.split()]
        return np.asarray(ids, dtype=np.int64)

    def _encode_batch(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self.embeddings[self.token_ids(text)].mean(axis=0)
        return out

    # --- trainable hooks -------------------------------------------------
    def forward_batch(self, texts: Sequence[str]) -> tuple[np.ndarray, list[np.ndarray]]:
        texts = list(texts)
        caches = [self.token_ids(t) for t in texts]
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, ids in enumerate(caches):
            out[i] = self.embeddings[ids].mean(axis=0)
        return out, caches

    def backward_batch(self, cache: list[np.ndarray], grad_out: np.ndarray) -> None:
        for ids, grad in zip(cache, grad_out):
            np.add.at(self._grad, ids, grad / len(ids))

    def parameters(self) -> dict[str, np.ndarray]:
        return {"embeddings": self.embeddings}

    def grads(self) -> dict[str, np.ndarray]:
        return {"embeddings": self._grad}

    def zero_grads(self) -> None:
        self._grad[...] = 0.0

    # --- token-level view (word-level backend: alignment is one-to-one) --
    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            raise ValueError("tokens must be non-empty")
        ids = np.asarray([self._index.get(w, self._unk_id) for w in tokens], dtype=np.int64)
        return self.embeddings[ids].copy()

    def forward_tokens(self, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        ids = np.asarray([self._index.get(w, self._unk_id) for w in tokens], dtype=np.int64)
        return self.embeddings[ids], ids

    def backward_tokens(self, ids: np.ndarray, grad_out: np.ndarray) -> None:
        np.add.at(self._grad, ids, grad_out)

    # --- checkpointing ----------------------------------------------------
    def checkpoint_arrays(self) -> dict[str, np.ndarray]:
        return {"embeddings": self.embeddings}

    def checkpoint_meta(self) -> dict[str, Any]:
        return {"vocab": list(self.vocab), "mask_token": self.mask_token}

    @classmethod
    def from_checkpoint(cls, manifest: dict, arrays: dict[str, np.ndarray]) -> "ToyEncoder":
        meta = manifest["meta"]
        embeddings = arrays["embeddings"]
        if embeddings.shape[1] != manifest["dim"]:
            raise CheckpointError(
                f"embedding dim {embeddings.shape[1]} does not match manifest "
                f"dim {manifest['dim']}"
            )
        if embeddings.shape[0] != len(meta["vocab"]):
            raise CheckpointError(
                f"embedding rows {embeddings.shape[0]} do not match vocab size "
                f"{len(meta['vocab'])}"
            )
        return cls(
            vocab=meta["vocab"],
            dim=manifest["dim"],
            name=manifest["name"],
            mask_token=meta["mask_token"],
            embeddings=embeddings,
            trainable=manifest["trainable"],
        )


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def save_checkpoint(encoder: Encoder, path: str | Path) -> dict:
    """Write ``manifest.json`` plus a parameter blob; returns the manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob_path = path / PARAMS_BLOB
    np.savez(blob_path, **encoder.checkpoint_arrays())
    manifest = {
        "kind": encoder.kind,
        "name": encoder.name,
        "dim": encoder.dim,
        "trainable": encoder.trainable,
        "meta": encoder.checkpoint_meta(),
        "blobs": {PARAMS_BLOB: _sha256(blob_path)},
    }
    (path / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8"
    )
    return manifest


def load_checkpoint(path: str | Path) -> Encoder:
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt manifest {manifest_path}: {exc}") from exc
    for blob_name, expected in manifest.get("blobs", {}).items():
        blob_path = path / blob_name
        if not blob_path.exists():
            raise CheckpointError(f"missing checkpoint blob: {blob_path}")
        actual = _sha256(blob_path)
        if actual != expected:
            raise CheckpointError(
                f"checkpoint blob {blob_path} is corrupt: content hash mismatch"
            )
    kind = manifest.get("kind")
    cls = ENCODER_KINDS.get(kind)
    if cls is None:
        raise CheckpointError(
            f"unknown encoder kind {kind!r}; registered: {sorted(ENCODER_KINDS)}"
        )
    with np.load(path / PARAMS_BLOB) as npz:
        arrays = {key: npz[key] for key in npz.files}
    encoder = cls.from_checkpoint(manifest, arrays)
    if encoder.dim != manifest["dim"]:
        raise CheckpointError(
            f"loaded encoder dim {encoder.dim} does not match manifest dim {manifest['dim']}"
        )
    return encoder
