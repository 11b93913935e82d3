"""Deterministic templated flight-booking corpus for desk-scale runs.

Six slot types with disjoint value vocabularies, filled into a small set
of utterance templates.  The generator is seeded and pure, so the same
arguments always produce byte-identical corpora.
"""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import Corpus, SlotOntology, Utterance, save_corpus

_CITIES = (
    "boston",
    "chicago",
    "denver",
    "atlanta",
    "seattle",
    "san francisco",
    "new orleans",
    "salt lake city",
    "orlando",
    "memphis",
)

_DAYS = (
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
    "tomorrow",
)

# Two type pairs deliberately share a value vocabulary (origin/destination
# draw from the same cities, depart/return days from the same weekdays), so
# the masked sentence context is the only signal telling them apart.
# airline and meal keep disjoint vocabularies and carry about half of the
# slot instances.
SLOT_VALUES: dict[str, tuple[str, ...]] = {
    "airline": (
        "transglobal",
        "aerolux",
        "skyhopper",
        "bluejet",
        "northwind air",
        "pacific wings",
        "silver arrow",
        "comet lines",
    ),
    "depart_day": _DAYS,
    "destination": _CITIES,
    "meal": (
        "vegan meal",
        "kosher meal",
        "gluten free dinner",
        "vegetarian lunch",
        "halal dinner",
        "fruit plate",
    ),
    "origin": _CITIES,
    "return_day": _DAYS,
}

# Placeholders {type} expand to a slot value; the rest are literal words.
# Cue words deliberately collide across types ("to {destination}" vs
# "to {meal}", "on {depart_day}" vs "on {airline}"), so neither the cue nor
# the value alone resolves the slot type everywhere.
TEMPLATES: tuple[str, ...] = (
    "book a flight from {origin} to {destination} departing {depart_day}",
    "does {airline} serve a {meal} from {origin} to {destination}",
    "change my meal to {meal}",
    "upgrade me to {airline} and add a {meal}",
    "i want {airline} from {origin} returning {return_day}",
    "is there a {meal} on the {airline} flight",
    "show {airline} departures from {origin} on {depart_day}",
    "i am back {return_day} so book the flight departing {depart_day}",
    "find a {airline} trip to {destination}",
    "put me on {airline} with the {meal} option",
    "fly me from {origin} to {destination} and back {return_day}",
    "list fares to {destination} departing {depart_day}",
    "reserve the {meal} for my {airline} flight from {origin}",
    "get me to {destination} returning {return_day}",
    "cancel my {meal} and switch to {airline}",
    "which {airline} flights carry a {meal}",
)

# Unlabeled chatter prepended/appended at random; widens the vocabulary so
# that few-shot classifiers cannot rely on every word being task-relevant.
PREFIXES: tuple[str, ...] = (
    "please",
    "hey there",
    "kindly",
    "quick question",
    "alright",
    "listen",
    "hello agent",
    "so",
    "uh",
    "good evening",
)
SUFFIXES: tuple[str, ...] = (
    "thanks",
    "thank you kindly",
    "for me",
    "right away",
    "whenever suits",
    "cheers",
    "if possible",
    "before lunch ideally",
    "no rush",
    "sorry for the bother",
)


def synthetic_ontology() -> SlotOntology:
    return SlotOntology.from_types(SLOT_VALUES)


def generate_synthetic_corpus(
    n_utterances: int,
    seed: int,
    split: str = "train",
    language: str = "syn",
    chatter_prob: float = 0.5,
) -> Corpus:
    if n_utterances < 1:
        raise ValueError("n_utterances must be >= 1")
    rng = random.Random(seed)
    utterances = []
    for i in range(n_utterances):
        template = rng.choice(TEMPLATES)
        if rng.random() < chatter_prob:
            template = rng.choice(PREFIXES) + " " + template
        if rng.random() < chatter_prob:
            template = template + " " + rng.choice(SUFFIXES)
        tokens: list[str] = []
        labels: list[str] = []
        for part in template.split():
            if part.startswith("{") and part.endswith("}"):
                slot_type = part[1:-1]
                value_tokens = rng.choice(SLOT_VALUES[slot_type]).split()
                tokens.extend(value_tokens)
                labels.append(f"B-{slot_type}")
                labels.extend(f"I-{slot_type}" for _ in value_tokens[1:])
            else:
                tokens.append(part)
                labels.append("O")
        utterances.append(
            Utterance(
                tuple(tokens),
                tuple(labels),
                id=f"{split}-{i:05d}",
                language=language,
            )
        )
    return Corpus(tuple(utterances), synthetic_ontology(), split)


def write_synthetic_dataset(
    out_dir: str | Path,
    n_train: int = 200,
    n_test: int = 200,
    seed: int = 7,
) -> tuple[Path, Path]:
    """Materialize train/test column files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = generate_synthetic_corpus(n_train, seed, split="train")
    test = generate_synthetic_corpus(n_test, seed + 1, split="test")
    train_path = out / "train.tsv"
    test_path = out / "test.tsv"
    save_corpus(train, train_path)
    save_corpus(test, test_path)
    return train_path, test_path
