"""Seeded experiment grids, ablations, summaries, and the filtering benchmark.

A run is a grid over training-set sizes, seeds, and systems (the token
baseline plus span-pipeline variants toggling contrastive tuning and the
binary filter).  Each cell writes ``<cell>/metrics.json`` atomically and is
skipped when already present, so interrupted runs resume.  Reports carry
no timestamps: re-running a finished grid reproduces byte-identical files.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classifiers import (
    FilterConfig,
    MLPModel,
    Stage2Config,
    TyperConfig,
    build_step1_training_set,
    build_step2_training_set,
    train_mlp,
)
from .contrastive import (
    Stage1Config,
    build_positive_pairs,
    encode_pair_items,
    sample_negative_pairs,
    train_stage1,
)
from .corpus import Corpus, SlotOntology, load_corpus, sample_few_shot
from .encoders import ToyEncoder
from .errors import ConfigError
from .metrics import silhouette_score, token_micro_f1
from .pipeline import PipelineConfig, predict_utterance
from .spans import corpus_triples
from .token_baseline import (
    TokenBaselineConfig,
    predict_tags,
    train_token_baseline,
)

log = logging.getLogger(__name__)

BASELINE_SYSTEM = "baseline"

_STEP1_SEED_OFFSET = 101
_STEP2_SEED_OFFSET = 202
_BASELINE_SEED_OFFSET = 303


@dataclass
class EncoderSpec:
    kind: str = "toy"
    dim: int = 32
    seed: int = 0
    name: str = "toy"
    vocab_source: str = "train"  # "train" or "train+test"

    def __post_init__(self) -> None:
        if self.vocab_source not in ("train", "train+test"):
            raise ConfigError(f"unknown vocab_source {self.vocab_source!r}")


@dataclass
class ExperimentConfig:
    train_path: str
    test_path: str
    pre_train_path: str | None = None
    m_values: list[int] = field(default_factory=lambda: [50, 100, 200])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    baseline: TokenBaselineConfig = field(default_factory=TokenBaselineConfig)
    max_sp: int = 5
    mask_token: str = "[MASK]"
    with_cl: list[bool] = field(default_factory=lambda: [True])
    with_step1: list[bool] = field(default_factory=lambda: [True])
    include_baseline: bool = False
    k_values: list[int] | None = None

    def __post_init__(self) -> None:
        if not self.m_values or any(m <= 0 for m in self.m_values):
            raise ConfigError("m_values must be positive")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.with_cl or not self.with_step1:
            raise ConfigError("ablation flag lists must be non-empty")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage1"] = asdict(self.stage1)
        d["stage2"] = asdict(self.stage2)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "encoder" in d:
            d["encoder"] = EncoderSpec(**d["encoder"])
        if "stage1" in d:
            d["stage1"] = Stage1Config(**d["stage1"])
        if "stage2" in d:
            s2 = dict(d["stage2"])
            if "step1" in s2:
                step1 = dict(s2["step1"])
                if "hidden_dims" in step1:
                    step1["hidden_dims"] = tuple(step1["hidden_dims"])
                s2["step1"] = FilterConfig(**step1)
            if "step2" in s2:
                step2 = dict(s2["step2"])
                if "hidden_dims" in step2:
                    step2["hidden_dims"] = tuple(step2["hidden_dims"])
                s2["step2"] = TyperConfig(**step2)
            d["stage2"] = Stage2Config(**s2)
        if "baseline" in d:
            d["baseline"] = TokenBaselineConfig(**d["baseline"])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def system_name(with_cl: bool, with_step1: bool, k: int | None = None) -> str:
    name = f"span-{'cl' if with_cl else 'nocl'}-{'filter' if with_step1 else 'nofilter'}"
    if k is not None:
        name += f"-k{k}"
    return name


def _with_ontology(corpus: Corpus, ontology: SlotOntology) -> Corpus:
    if corpus.ontology == ontology:
        return corpus
    return Corpus(corpus.utterances, ontology, corpus.split)


def build_base_encoder(cfg: ExperimentConfig, train: Corpus, test: Corpus,
                       pre: Corpus | None = None) -> ToyEncoder:
    if cfg.encoder.kind != "toy":
        raise ConfigError(
            f"only the built-in 'toy' encoder can be built from a config; "
            f"plug {cfg.encoder.kind!r} in through the library API"
        )
    texts = [u.text for u in train.utterances]
    if pre is not None:
        texts.extend(u.text for u in pre.utterances)
    if cfg.encoder.vocab_source == "train+test":
        texts.extend(u.text for u in test.utterances)
    return ToyEncoder.fit(
        texts,
        dim=cfg.encoder.dim,
        seed=cfg.encoder.seed,
        name=cfg.encoder.name,
        mask_token=cfg.mask_token,
    )


def _test_silhouette(encoder, test_corpus: Corpus, cfg: ExperimentConfig) -> float | None:
    triples = corpus_triples(test_corpus, "gold_only", cfg.max_sp, cfg.mask_token)
    triples = [t for t in triples if t.span.length <= cfg.max_sp]
    labels = [t.label for t in triples]
    if len(set(labels)) < 2:
        return None
    vectors = encode_pair_items(encoder, triples)
    return silhouette_score(vectors, labels)


def run_span_system(
    base_encoder: ToyEncoder,
    train_sample: Corpus,
    test_corpus: Corpus,
    cfg: ExperimentConfig,
    *,
    with_cl: bool,
    with_step1: bool,
    k: int,
    seed: int,
    pre_corpus: Corpus | None = None,
) -> dict:
    """Train one span-pipeline variant and evaluate it on the test corpus."""
    encoder = copy.deepcopy(base_encoder)
    ontology = train_sample.ontology
    phases_done: list[str] = []
    step1_model: MLPModel | None = None
    step2_model: MLPModel | None = None

    silhouette_before = _test_silhouette(encoder, test_corpus, cfg) if with_cl else None

    phases: list[tuple[str, Corpus]] = []
    if pre_corpus is not None:
        phases.append(("pre", pre_corpus))
    phases.append(("target", train_sample))

    for phase_name, phase_corpus in phases:
        all_triples = corpus_triples(phase_corpus, "all_spans", cfg.max_sp, cfg.mask_token)
        if with_cl:
            # Positives pair equal non-None labels; the negative pool also
            # offers the unlabeled spans.
            positives = build_positive_pairs(all_triples)
            negatives = sample_negative_pairs(all_triples, positives, k, seed)
            pairs = positives + negatives
            if pairs:
                stage1_cfg = replace(cfg.stage1, seed=seed, negatives_per_anchor=k)
                train_stage1(encoder, pairs, stage1_cfg)
        s2 = cfg.stage2
        if with_step1:
            ds1 = build_step1_training_set(
                all_triples, encoder,
                none_cap_per_sentence=s2.none_cap_per_sentence, seed=seed,
            )
            step1_model = train_mlp(
                ds1, s2.step1.hidden_dims, s2.step1,
                seed + _STEP1_SEED_OFFSET, initial=step1_model,
            )
            ds2 = build_step2_training_set(all_triples, encoder, ontology, include_none=False)
        else:
            ds2 = build_step2_training_set(
                all_triples, encoder, ontology, include_none=True,
                none_cap_per_sentence=s2.none_cap_per_sentence, seed=seed,
            )
        step2_model = train_mlp(
            ds2, s2.step2.hidden_dims, s2.step2,
            seed + _STEP2_SEED_OFFSET, initial=step2_model,
        )
        phases_done.append(f"{phase_name}:{len(phase_corpus)}")

    silhouette_after = _test_silhouette(encoder, test_corpus, cfg) if with_cl else None

    pipe_cfg = PipelineConfig(
        use_step1_filter=with_step1,
        max_sp=cfg.max_sp,
        mask_token=cfg.mask_token,
        step1_threshold=cfg.stage2.step1.threshold,
    )
    gold, pred = [], []
    invocations = 0
    for utt in test_corpus:
        result = predict_utterance(encoder, step1_model, step2_model, utt, pipe_cfg)
        gold.append(list(utt.labels))
        pred.append(result.labels)
        invocations += result.step2_invocations
    report = token_micro_f1(gold, pred)
    return {
        "f1": report.f1,
        "precision": report.precision,
        "recall": report.recall,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "per_type": report.per_type,
        "step2_invocations": invocations,
        "silhouette_before": silhouette_before,
        "silhouette_after": silhouette_after,
        "phases": phases_done,
    }


def run_baseline_system(
    base_encoder: ToyEncoder,
    train_sample: Corpus,
    test_corpus: Corpus,
    cfg: ExperimentConfig,
    *,
    seed: int,
    pre_corpus: Corpus | None = None,
) -> dict:
    encoder = copy.deepcopy(base_encoder)
    phases_done: list[str] = []
    model = None
    phases: list[tuple[str, Corpus]] = []
    if pre_corpus is not None:
        phases.append(("pre", pre_corpus))
    phases.append(("target", train_sample))
    for phase_name, phase_corpus in phases:
        model = train_token_baseline(
            encoder, phase_corpus, cfg.baseline,
            seed + _BASELINE_SEED_OFFSET, initial=model,
        )
        phases_done.append(f"{phase_name}:{len(phase_corpus)}")
    gold = [list(u.labels) for u in test_corpus]
    pred = [predict_tags(model, u) for u in test_corpus]
    report = token_micro_f1(gold, pred)
    return {
        "f1": report.f1,
        "precision": report.precision,
        "recall": report.recall,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "per_type": report.per_type,
        "phases": phases_done,
    }


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")
    os.replace(tmp, path)


def _cells(cfg: ExperimentConfig) -> list[dict]:
    cells = []
    k_values = cfg.k_values if cfg.k_values is not None else [cfg.stage1.negatives_per_anchor]
    k_tag = cfg.k_values is not None
    for m in cfg.m_values:
        for seed in cfg.seeds:
            if cfg.include_baseline:
                cells.append(
                    {"m": m, "seed": seed, "system": BASELINE_SYSTEM, "k": None}
                )
            for k in k_values:
                for with_cl in cfg.with_cl:
                    for with_step1 in cfg.with_step1:
                        cells.append(
                            {
                                "m": m,
                                "seed": seed,
                                "system": system_name(
                                    with_cl, with_step1, k if k_tag else None
                                ),
                                "k": k,
                                "with_cl": with_cl,
                                "with_step1": with_step1,
                            }
                        )
    return cells


def run_experiment(
    cfg: ExperimentConfig,
    report_dir: str | Path,
    projector: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Path:
    """Execute the grid; per-cell failures are recorded and do not stop the run."""
    report = Path(report_dir)
    report.mkdir(parents=True, exist_ok=True)
    config_path = report / "config.json"
    if not config_path.exists():
        _atomic_write_json(config_path, cfg.to_dict())

    train_corpus = load_corpus(cfg.train_path, "train")
    test_corpus = load_corpus(cfg.test_path, "test")
    pre_corpus = (
        load_corpus(cfg.pre_train_path, "train") if cfg.pre_train_path else None
    )
    ontology = SlotOntology.from_types(
        set(train_corpus.ontology.slot_types)
        | set(test_corpus.ontology.slot_types)
        | (set(pre_corpus.ontology.slot_types) if pre_corpus else set())
    )
    train_corpus = _with_ontology(train_corpus, ontology)
    test_corpus = _with_ontology(test_corpus, ontology)
    if pre_corpus is not None:
        pre_corpus = _with_ontology(pre_corpus, ontology)

    base_encoder = build_base_encoder(cfg, train_corpus, test_corpus, pre_corpus)
    language = test_corpus.utterances[0].language if len(test_corpus) else "und"

    for cell in _cells(cfg):
        cell_name = f"m{cell['m']}_seed{cell['seed']}_{cell['system']}"
        cell_dir = report / cell_name
        metrics_path = cell_dir / "metrics.json"
        if metrics_path.exists():
            log.info("cell %s already complete; skipping", cell_name)
            continue
        cell_dir.mkdir(parents=True, exist_ok=True)
        try:
            sample = sample_few_shot(train_corpus, cell["m"], cell["seed"])
            if cell["system"] == BASELINE_SYSTEM:
                metrics = run_baseline_system(
                    base_encoder, sample, test_corpus, cfg,
                    seed=cell["seed"], pre_corpus=pre_corpus,
                )
            else:
                metrics = run_span_system(
                    base_encoder, sample, test_corpus, cfg,
                    with_cl=cell["with_cl"], with_step1=cell["with_step1"],
                    k=cell["k"], seed=cell["seed"], pre_corpus=pre_corpus,
                )
            metrics.update(
                {
                    "cell": cell_name,
                    "system": cell["system"],
                    "m": cell["m"],
                    "seed": cell["seed"],
                    "k": cell["k"],
                    "language": language,
                    "train_size": len(sample),
                    "test_size": len(test_corpus),
                }
            )
            _atomic_write_json(metrics_path, metrics)
            error_path = cell_dir / "error.json"
            if error_path.exists():
                error_path.unlink()
            log.info("cell %s: f1=%.4f", cell_name, metrics["f1"])
        except Exception as exc:  # noqa: BLE001 - the grid must keep going
            log.exception("cell %s failed", cell_name)
            _atomic_write_json(
                cell_dir / "error.json",
                {"cell": cell_name, "error": f"{type(exc).__name__}: {exc}"},
            )
    write_summary(report)
    return report


def collect_cell_metrics(report_dir: str | Path) -> list[dict]:
    out = []
    for metrics_path in sorted(Path(report_dir).glob("*/metrics.json")):
        out.append(json.loads(metrics_path.read_text(encoding="utf-8")))
    return out


def write_summary(report_dir: str | Path) -> Path:
    """Pivot of seed-mean±stddev F1: rows language/M, columns systems."""
    report = Path(report_dir)
    cells = collect_cell_metrics(report)
    groups: dict[tuple[str, int, str], list[float]] = {}
    for m in cells:
        groups.setdefault((m["language"], m["m"], m["system"]), []).append(m["f1"])
    systems = sorted({key[2] for key in groups})
    rows = sorted({(key[0], key[1]) for key in groups})
    summary_path = report / "summary.csv"
    tmp = summary_path.with_suffix(".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["language", "m", *systems])
        for language, m in rows:
            row = [language, str(m)]
            for system in systems:
                scores = groups.get((language, m, system))
                if scores is None:
                    row.append("")
                else:
                    mean = float(np.mean(scores))
                    std = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
                    row.append(f"{mean:.4f}±{std:.4f}")
            writer.writerow(row)
    os.replace(tmp, summary_path)
    return summary_path


@dataclass
class BenchReport:
    """Per-language filtering-ablation accounting.

    Invocation counts are the hardware-independent signal; wall times are
    recorded for completeness but depend on the machine.
    """

    per_language: dict[str, dict]

    def __post_init__(self) -> None:
        for language, stats in self.per_language.items():
            if (
                stats["step2_invocations_with_filter"]
                > stats["step2_invocations_without_filter"]
            ):
                raise ValueError(
                    f"{language}: invocation count with filtering exceeds "
                    "the count without"
                )

    def to_dict(self) -> dict:
        return {"per_language": self.per_language}


def bench_filtering(
    encoder,
    step1_model: MLPModel,
    step2_with: MLPModel,
    step2_without: MLPModel,
    test_corpus: Corpus,
    pipe_cfg: PipelineConfig | None = None,
) -> BenchReport:
    """Run the pipeline with and without the binary filter on every utterance.

    ``step2_with`` is the filter-regime classifier (no no-slot class);
    ``step2_without`` carries the no-slot class for the unfiltered regime.
    """
    base = pipe_cfg or PipelineConfig()
    cfg_with = replace(base, use_step1_filter=True)
    cfg_without = replace(base, use_step1_filter=False)
    acc: dict[str, dict] = {}
    gold_by_lang: dict[str, list] = {}
    pred_with: dict[str, list] = {}
    pred_without: dict[str, list] = {}
    for utt in test_corpus:
        stats = acc.setdefault(
            utt.language,
            {
                "step2_invocations_with_filter": 0,
                "step2_invocations_without_filter": 0,
                "wall_time_with": 0.0,
                "wall_time_without": 0.0,
            },
        )
        t0 = time.perf_counter()
        with_result = predict_utterance(encoder, step1_model, step2_with, utt, cfg_with)
        t1 = time.perf_counter()
        without_result = predict_utterance(encoder, None, step2_without, utt, cfg_without)
        t2 = time.perf_counter()
        assert with_result.step2_invocations <= without_result.step2_invocations
        stats["step2_invocations_with_filter"] += with_result.step2_invocations
        stats["step2_invocations_without_filter"] += without_result.step2_invocations
        stats["wall_time_with"] += t1 - t0
        stats["wall_time_without"] += t2 - t1
        gold_by_lang.setdefault(utt.language, []).append(list(utt.labels))
        pred_with.setdefault(utt.language, []).append(with_result.labels)
        pred_without.setdefault(utt.language, []).append(without_result.labels)
    for language, stats in acc.items():
        stats["f1_with"] = token_micro_f1(gold_by_lang[language], pred_with[language]).f1
        stats["f1_without"] = token_micro_f1(
            gold_by_lang[language], pred_without[language]
        ).f1
    return BenchReport(per_language=acc)


def desk_scale_stage_configs() -> tuple[Stage1Config, Stage2Config, TokenBaselineConfig]:
    """Schedules sized for the bundled synthetic corpus and the toy encoder.

    The library defaults keep the full-scale schedules (tiny learning
    rates, wide MLPs) that suit pretrained transformer encoders; the toy
    word-embedding encoder needs larger steps and far narrower classifiers
    to learn anything in CPU minutes.
    """
    stage1 = Stage1Config(learning_rate=0.03, negatives_per_anchor=4)
    stage2 = Stage2Config(
        step1=FilterConfig(learning_rate=3e-3, hidden_dims=(128, 64)),
        step2=TyperConfig(learning_rate=3e-3, hidden_dims=(64, 32)),
    )
    baseline = TokenBaselineConfig(learning_rate=0.05)
    return stage1, stage2, baseline


def synthetic_experiment_config(
    train_path: str | Path,
    test_path: str | Path,
    **overrides,
) -> ExperimentConfig:
    """Desk-scale grid over the synthetic corpus; see ``desk_scale_stage_configs``."""
    stage1, stage2, baseline = desk_scale_stage_configs()
    kwargs = {
        "train_path": str(train_path),
        "test_path": str(test_path),
        "m_values": [50],
        "seeds": [1, 2, 3],
        "encoder": EncoderSpec(dim=32),
        "stage1": stage1,
        "stage2": stage2,
        "baseline": baseline,
    }
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


def export_projection(
    vectors: np.ndarray,
    labels: Sequence,
    projector: Callable[[np.ndarray], np.ndarray],
    out_path: str | Path,
) -> Path:
    """Project vectors to 2-D with the injected projector and write x,y,label rows."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] < 2:
        raise ValueError("projection requires at least 2 points")
    if vectors.shape[0] != len(labels):
        raise ValueError("vectors and labels disagree in length")
    points = np.asarray(projector(vectors), dtype=np.float64)
    if points.shape != (vectors.shape[0], 2):
        raise ValueError(f"projector must return (n, 2) points, got {points.shape}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(points, labels):
            writer.writerow([f"{x:.8g}", f"{y:.8g}", str(label)])
    return out_path
