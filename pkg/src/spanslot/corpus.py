"""BIO-annotated corpora: parsing, validation, sampling, serialization.

On-disk format: ``token<TAB>tag`` lines, one blank line between utterances,
optionally preceded by a ``# id=<string>`` comment naming the utterance.
Both xSID-style and ATIS-style column files reduce to this shape; the tag
column index is configurable for files carrying extra columns.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import BioValidationError, EmptyCorpusError, ParseError

O_TAG = "O"

VALID_SPLITS = ("train", "dev", "test")


def validate_bio(labels: Iterable[str]) -> list[tuple[int, str]]:
    """Check a tag sequence against the BIO scheme.

    Returns one ``(position, reason)`` entry per violation; an empty list
    means the sequence is valid.  Total function: never raises.
    """
    violations: list[tuple[int, str]] = []
    open_type: str | None = None
    for i, tag in enumerate(labels):
        if tag == O_TAG:
            open_type = None
            continue
        if len(tag) < 3 or tag[0] not in ("B", "I") or tag[1] != "-":
            violations.append((i, "malformed tag"))
            open_type = None
            continue
        kind, slot_type = tag[0], tag[2:]
        if kind == "I":
            if open_type is None:
                violations.append((i, "I without opener"))
            elif open_type != slot_type:
                violations.append((i, "I type mismatch"))
        open_type = slot_type
    return violations


@dataclass(frozen=True)
class Utterance:
    """One whitespace-tokenized sentence with aligned BIO labels.

    Invalid BIO sequences are rejected at construction: silently repairing
    them would corrupt the gold spans extracted later.
    """

    tokens: tuple[str, ...]
    labels: tuple[str, ...]
    id: str
    language: str = "und"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.tokens) != len(self.labels):
            raise BioValidationError(
                f"utterance {self.id!r}: {len(self.tokens)} tokens but "
                f"{len(self.labels)} labels"
            )
        for i, tok in enumerate(self.tokens):
            if not tok or tok.split() != [tok]:
                raise BioValidationError(
                    f"utterance {self.id!r}: token {i} is empty or contains whitespace"
                )
        violations = validate_bio(self.labels)
        if violations:
            detail = "; ".join(f"position {p}: {r}" for p, r in violations)
            raise BioValidationError(f"utterance {self.id!r}: {detail}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def slot_types(self) -> set[str]:
        return {tag[2:] for tag in self.labels if tag != O_TAG}


@dataclass(frozen=True)
class SlotOntology:
    """The task's slot types, lexicographically ordered.

    The ordering pins class indices across runs.  The special no-slot value
    is represented as Python ``None`` everywhere and is never a member of
    ``slot_types``.
    """

    slot_types: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "slot_types", tuple(self.slot_types))
        if list(self.slot_types) != sorted(set(self.slot_types)):
            raise ValueError("slot_types must be unique and lexicographically sorted")
        if any(not t for t in self.slot_types):
            raise ValueError("slot types must be non-empty strings")

    @classmethod
    def from_types(cls, types: Iterable[str]) -> "SlotOntology":
        return cls(tuple(sorted(set(types))))

    @property
    def n_types(self) -> int:
        return len(self.slot_types)

    def index_of(self, slot_type: str) -> int:
        try:
            return self.slot_types.index(slot_type)
        except ValueError:
            raise ValueError(f"unknown slot type {slot_type!r}") from None

    def __contains__(self, slot_type: object) -> bool:
        return slot_type in self.slot_types

    def class_names(self, include_none: bool = False) -> tuple[str | None, ...]:
        """Class-index map: slot types in ontology order, no-slot last."""
        if include_none:
            return (*self.slot_types, None)
        return self.slot_types


@dataclass(frozen=True)
class Corpus:
    utterances: tuple[Utterance, ...]
    ontology: SlotOntology
    split: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if self.split not in VALID_SPLITS:
            raise ValueError(f"split must be one of {VALID_SPLITS}, got {self.split!r}")
        for utt in self.utterances:
            unknown = utt.slot_types() - set(self.ontology.slot_types)
            if unknown:
                raise BioValidationError(
                    f"utterance {utt.id!r} uses slot types absent from the "
                    f"ontology: {sorted(unknown)}"
                )

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)

    def languages(self) -> tuple[str, ...]:
        return tuple(sorted({u.language for u in self.utterances}))


def parse_bio_corpus(
    stream: str | IO[str],
    split: str,
    *,
    tag_column: int = 1,
    language: str = "und",
) -> Corpus:
    """Parse column-format text into a validated :class:`Corpus`.

    ``stream`` is either the file content itself or a readable text handle.
    The slot ontology is derived from the observed tags.
    """
    if hasattr(stream, "read"):
        content = stream.read()
    else:
        content = stream
    if not isinstance(content, str):
        raise ParseError("stream must be text")

    utterances: list[Utterance] = []
    tokens: list[str] = []
    tags: list[str] = []
    pending_id: str | None = None
    seen_ids: set[str] = set()

    def flush(line_no: int) -> None:
        nonlocal tokens, tags, pending_id
        if not tokens:
            pending_id = None
            return
        utt_id = pending_id if pending_id is not None else f"{split}-{len(utterances):05d}"
        if utt_id in seen_ids:
            raise ParseError(f"line {line_no}: duplicate utterance id {utt_id!r}")
        seen_ids.add(utt_id)
        utterances.append(
            Utterance(tuple(tokens), tuple(tags), id=utt_id, language=language)
        )
        tokens, tags = [], []
        pending_id = None

    line_no = 0
    for line_no, raw in enumerate(content.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(line_no)
            continue
        if line.startswith("# id="):
            pending_id = line[len("# id="):].strip()
            continue
        cols = line.split("\t")
        if len(cols) < max(2, tag_column + 1):
            raise ParseError(
                f"line {line_no}: expected at least {max(2, tag_column + 1)} "
                f"tab-separated columns, got {len(cols)}: {line!r}"
            )
        token, tag = cols[0], cols[tag_column]
        if not token.strip():
            raise ParseError(f"line {line_no}: empty token")
        if not tag.strip():
            raise ParseError(f"line {line_no}: empty tag")
        tokens.append(token)
        tags.append(tag)
    flush(line_no + 1)

    if not utterances:
        raise EmptyCorpusError("empty corpus: no utterances found in stream")

    observed = {t for u in utterances for t in u.slot_types()}
    return Corpus(tuple(utterances), SlotOntology.from_types(observed), split)


def load_corpus(
    path: str | Path,
    split: str,
    *,
    tag_column: int = 1,
    language: str = "und",
) -> Corpus:
    text = Path(path).read_text(encoding="utf-8")
    return parse_bio_corpus(text, split, tag_column=tag_column, language=language)


def serialize_corpus(corpus: Corpus, *, include_ids: bool = True) -> str:
    """Render a corpus back to column format (inverse of the parser)."""
    blocks = []
    for utt in corpus.utterances:
        lines = []
        if include_ids:
            lines.append(f"# id={utt.id}")
        lines.extend(f"{tok}\t{tag}" for tok, tag in zip(utt.tokens, utt.labels))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def save_corpus(corpus: Corpus, path: str | Path, *, include_ids: bool = True) -> None:
    Path(path).write_text(serialize_corpus(corpus, include_ids=include_ids), encoding="utf-8")


def sample_few_shot(corpus: Corpus, m: int, seed: int) -> Corpus:
    """Uniform without-replacement sample of ``m`` utterances.

    Selected utterances keep their original corpus order, and the ontology
    is inherited unchanged so slot types unseen in the sample stay valid
    classes.
    """
    n = len(corpus.utterances)
    if m <= 0:
        raise ValueError(f"sample size must be positive, got {m}")
    if m > n:
        raise ValueError(f"cannot sample {m} utterances from a corpus of {n}")
    picked = sorted(random.Random(seed).sample(range(n), m))
    chosen = tuple(corpus.utterances[i] for i in picked)
    return Corpus(chosen, corpus.ontology, corpus.split)


def corpus_stats(corpus: Corpus) -> dict:
    """Summary statistics in the shape used by the ``stats`` CLI command."""
    slots_per_utt = Counter()
    n_tokens = 0
    for utt in corpus.utterances:
        n_tokens += len(utt)
        slots_per_utt[sum(1 for tag in utt.labels if tag.startswith("B-"))] += 1
    histogram = {str(k): slots_per_utt[k] for k in sorted(slots_per_utt)}
    return {
        "num_utterances": len(corpus.utterances),
        "num_tokens": n_tokens,
        "slot_types": list(corpus.ontology.slot_types),
        "slots_per_utterance_histogram": histogram,
    }
