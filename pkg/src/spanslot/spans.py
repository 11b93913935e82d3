"""Candidate-span enumeration and masked-sentence/span/label triples.

Each annotated sentence is decomposed into records pairing the sentence
with one of its subspans: the span tokens are replaced by a mask literal,
the removed tokens become the span text, and the label is the slot type
when the span exactly matches a gold slot value, otherwise ``None``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

from .corpus import O_TAG, Utterance

log = logging.getLogger(__name__)

DEFAULT_MAX_SPAN = 5
DEFAULT_MASK_TOKEN = "[MASK]"

TripleMode = Literal["gold_only", "all_spans"]


@dataclass(frozen=True)
class Span:
    """Contiguous token run: 0-based inclusive start, length >= 1."""

    start: int
    length: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"span start must be >= 0, got {self.start}")
        if self.length < 1:
            raise ValueError(f"span length must be >= 1, got {self.length}")

    @property
    def stop(self) -> int:
        """Exclusive end index."""
        return self.start + self.length

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.stop and other.start < self.stop


@dataclass(frozen=True)
class SpanTriple:
    masked_text: str
    span_text: str
    label: str | None
    source_id: str
    span: Span

    def __post_init__(self) -> None:
        if not self.span_text:
            raise ValueError("span_text must be non-empty")

    @property
    def ref(self) -> tuple[str, int, int]:
        """Stable reference used by pair serialization."""
        return (self.source_id, self.span.start, self.span.length)


def enumerate_spans(utterance: Utterance, max_sp: int = DEFAULT_MAX_SPAN) -> list[Span]:
    """All contiguous spans up to ``max_sp`` tokens, by start then length."""
    if max_sp < 1:
        raise ValueError(f"max_sp must be >= 1, got {max_sp}")
    n = len(utterance)
    if n == 0:
        raise ValueError(f"utterance {utterance.id!r} is empty")
    return [
        Span(start, length)
        for start in range(n)
        for length in range(1, min(max_sp, n - start) + 1)
    ]


def gold_slot_spans(utterance: Utterance) -> list[tuple[Span, str]]:
    """Decode the gold BIO labels into (span, slot type) entries.

    One entry per maximal ``B..I*`` run; requires valid BIO, which
    :class:`Utterance` guarantees at construction.
    """
    out: list[tuple[Span, str]] = []
    start: int | None = None
    current: str | None = None
    for i, tag in enumerate(utterance.labels):
        if tag.startswith("B-"):
            if start is not None:
                out.append((Span(start, i - start), current))
            start, current = i, tag[2:]
        elif tag == O_TAG:
            if start is not None:
                out.append((Span(start, i - start), current))
            start, current = None, None
        # I- tags extend the open run
    if start is not None:
        out.append((Span(start, len(utterance) - start), current))
    return out


def render_masked(
    utterance: Utterance, span: Span, mask_token: str = DEFAULT_MASK_TOKEN
) -> str:
    """Replace each token inside ``span`` by the mask literal, one per word."""
    if span.stop > len(utterance):
        raise ValueError(
            f"span {span} out of range for utterance {utterance.id!r} "
            f"of {len(utterance)} tokens"
        )
    words = [
        mask_token if span.start <= i < span.stop else tok
        for i, tok in enumerate(utterance.tokens)
    ]
    return " ".join(words)


def span_text(utterance: Utterance, span: Span) -> str:
    return " ".join(utterance.tokens[span.start : span.stop])


def make_triples(
    utterance: Utterance,
    mode: TripleMode,
    max_sp: int = DEFAULT_MAX_SPAN,
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> list[SpanTriple]:
    """Build span triples for one utterance.

    ``gold_only``: one triple per gold slot value (a sentence with k slot
    values yields k triples).  Gold spans longer than ``max_sp`` are still
    emitted but logged as truncation warnings, since they can never be
    recovered from enumeration.

    ``all_spans``: one triple per enumerated span; the label is the slot
    type on exact boundary match with a gold span, else ``None``.
    """
    if len(utterance) == 0:
        raise ValueError(f"utterance {utterance.id!r} is empty")
    if mode not in ("gold_only", "all_spans"):
        raise ValueError(f"unknown triple mode {mode!r}")

    gold = gold_slot_spans(utterance)

    def triple(span: Span, label: str | None) -> SpanTriple:
        return SpanTriple(
            masked_text=render_masked(utterance, span, mask_token),
            span_text=span_text(utterance, span),
            label=label,
            source_id=utterance.id,
            span=span,
        )

    if mode == "gold_only":
        out = []
        for span, slot_type in gold:
            if span.length > max_sp:
                log.warning(
                    "utterance %s: gold span at %d of length %d exceeds max_sp=%d "
                    "and is unreachable at inference",
                    utterance.id,
                    span.start,
                    span.length,
                    max_sp,
                )
            out.append(triple(span, slot_type))
        return out

    by_extent = {(s.start, s.length): t for s, t in gold}
    return [
        triple(span, by_extent.get((span.start, span.length)))
        for span in enumerate_spans(utterance, max_sp)
    ]


def corpus_triples(
    utterances: Iterable[Utterance],
    mode: TripleMode,
    max_sp: int = DEFAULT_MAX_SPAN,
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> list[SpanTriple]:
    out: list[SpanTriple] = []
    for utt in utterances:
        out.extend(make_triples(utt, mode, max_sp, mask_token))
    return out


def triple_to_dict(t: SpanTriple) -> dict:
    return {
        "source_id": t.source_id,
        "masked_text": t.masked_text,
        "span_text": t.span_text,
        "label": t.label,
        "start": t.span.start,
        "length": t.span.length,
    }


def triple_from_dict(d: dict) -> SpanTriple:
    return SpanTriple(
        masked_text=d["masked_text"],
        span_text=d["span_text"],
        label=d["label"],
        source_id=d["source_id"],
        span=Span(d["start"], d["length"]),
    )


def write_triples_jsonl(path: str | Path, triples: Iterable[SpanTriple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(json.dumps(triple_to_dict(t), sort_keys=True) + "\n")


def read_triples_jsonl(path: str | Path) -> list[SpanTriple]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(triple_from_dict(json.loads(line)))
    return out
