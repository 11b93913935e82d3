"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately written as plain scans/loops, separate
from the library's implementations, so test comparisons are two-route.
"""

from __future__ import annotations

import math
import random

from spanslot.corpus import Corpus, SlotOntology, Utterance


def span_count_formula(n: int, max_sp: int) -> int:
    return sum(n - length + 1 for length in range(1, min(max_sp, n) + 1))


def enumerate_spans_brute(n: int, max_sp: int) -> list[tuple[int, int]]:
    out = []
    for start in range(n):
        for length in range(1, max_sp + 1):
            if start + length <= n:
                out.append((start, length))
    out.sort()
    return out


def gold_spans_brute(labels: list[str]) -> list[tuple[int, int, str]]:
    """Every (start, length, type) whose extent is a maximal B..I* run."""
    n = len(labels)
    out = []
    for start in range(n):
        for length in range(1, n - start + 1):
            if not labels[start].startswith("B-"):
                continue
            slot_type = labels[start][2:]
            inside = all(
                labels[i] == f"I-{slot_type}" for i in range(start + 1, start + length)
            )
            ends = start + length == n or labels[start + length] != f"I-{slot_type}"
            if inside and ends:
                out.append((start, length, slot_type))
    return out


def positive_pairs_brute(labels: list[str | None]) -> list[tuple[int, int]]:
    out = []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            if labels[i] is not None and labels[i] == labels[j]:
                out.append((i, j))
    return out


def token_f1_brute(gold_seqs, pred_seqs) -> tuple[int, int, int, float]:
    tp = fp = fn = 0
    for g_seq, p_seq in zip(gold_seqs, pred_seqs):
        for g, p in zip(g_seq, p_seq):
            if g != "O" and g == p:
                tp += 1
                continue
            if p != "O":
                fp += 1
            if g != "O":
                fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return tp, fp, fn, f1


def cosine_distance_brute(u, v) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return 1.0 - dot / (nu * nv)


def silhouette_brute(vectors, labels) -> float:
    n = len(labels)
    dist = [[cosine_distance_brute(vectors[i], vectors[j]) for j in range(n)] for i in range(n)]
    unique = sorted(set(labels), key=str)
    scores = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = sum(dist[i][j] for j in own) / len(own)
        b = math.inf
        for lab in unique:
            if lab == labels[i]:
                continue
            members = [j for j in range(n) if labels[j] == lab]
            b = min(b, sum(dist[i][j] for j in members) / len(members))
        denom = max(a, b)
        scores.append((b - a) / denom if denom > 0 else 0.0)
    return sum(scores) / n


def mlp_forward_brute(weights, biases, x_row) -> list[float]:
    """Per-unit arithmetic forward pass for one input row."""
    h = list(x_row)
    for layer, (w, b) in enumerate(zip(weights, biases)):
        out = []
        for unit in range(w.shape[1]):
            z = b[unit] + sum(h[i] * w[i, unit] for i in range(w.shape[0]))
            if layer < len(weights) - 1:
                z = max(z, 0.0)
            out.append(z)
        h = out
    return h


def train_perceptron(features, targets, epochs: int = 200) -> float:
    """Plain perceptron training accuracy; 1.0 certifies linear separability."""
    n, d = features.shape
    w = [0.0] * d
    b = 0.0
    signed = [1 if t == 1 else -1 for t in targets]
    for _ in range(epochs):
        errors = 0
        for i in range(n):
            score = b + sum(w[j] * features[i, j] for j in range(d))
            if signed[i] * score <= 0:
                for j in range(d):
                    w[j] += signed[i] * features[i, j]
                b += signed[i]
                errors += 1
        if errors == 0:
            break
    correct = 0
    for i in range(n):
        score = b + sum(w[j] * features[i, j] for j in range(d))
        if (1 if score > 0 else -1) == signed[i]:
            correct += 1
    return correct / n


def central_difference(fn, array, index, h: float = 1e-6) -> float:
    old = array[index]
    array[index] = old + h
    up = fn()
    array[index] = old - h
    down = fn()
    array[index] = old
    return (up - down) / (2 * h)


def random_valid_bio(rng: random.Random, n: int, types: list[str]) -> list[str]:
    labels = []
    i = 0
    while i < n:
        if rng.random() < 0.35:
            slot_type = rng.choice(types)
            length = min(rng.randint(1, 3), n - i)
            labels.append(f"B-{slot_type}")
            labels.extend(f"I-{slot_type}" for _ in range(length - 1))
            i += length
        else:
            labels.append("O")
            i += 1
    return labels


def random_corpus(
    rng: random.Random,
    n_utterances: int,
    types: list[str] | None = None,
    split: str = "train",
    min_len: int = 1,
    max_len: int = 12,
) -> Corpus:
    types = types or ["alpha", "beta", "gamma"]
    vocab = [f"w{i}" for i in range(40)]
    utterances = []
    for i in range(n_utterances):
        n = rng.randint(min_len, max_len)
        tokens = tuple(rng.choice(vocab) for _ in range(n))
        labels = tuple(random_valid_bio(rng, n, types))
        utterances.append(
            Utterance(tokens, labels, id=f"{split}-{i:05d}", language="und")
        )
    return Corpus(tuple(utterances), SlotOntology.from_types(types), split)
