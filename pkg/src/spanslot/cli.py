"""Command-line interface: synth, stats, train, predict, evaluate, run, bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as exp
from .classifiers import (
    build_step1_training_set,
    build_step2_training_set,
    load_classifier,
    save_classifier,
    train_mlp,
)
from .contrastive import build_positive_pairs, sample_negative_pairs, train_stage1
from .corpus import corpus_stats, load_corpus, sample_few_shot
from .encoders import ToyEncoder, load_checkpoint, save_checkpoint
from .metrics import token_micro_f1
from .pipeline import (
    PipelineConfig,
    predict_corpus,
    read_predictions_jsonl,
    write_predictions_jsonl,
)
from .spans import corpus_triples
from .synthetic import write_synthetic_dataset

log = logging.getLogger("spanslot")


def _cmd_synth(args: argparse.Namespace) -> int:
    train_path, test_path = write_synthetic_dataset(
        args.out_dir, n_train=args.train, n_test=args.test, seed=args.seed
    )
    print(json.dumps({"train": str(train_path), "test": str(test_path)}))
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.input, args.split, tag_column=args.tag_column)
    print(json.dumps(corpus_stats(corpus), indent=2, sort_keys=True))
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.train, "train")
    if args.m is not None:
        corpus = sample_few_shot(corpus, args.m, args.seed)
    if args.preset == "desk":
        stage1_cfg, stage2_cfg, _ = exp.desk_scale_stage_configs()
    else:
        from .classifiers import Stage2Config
        from .contrastive import Stage1Config

        stage1_cfg, stage2_cfg = Stage1Config(), Stage2Config()
    stage1_cfg.seed = args.seed
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    encoder = ToyEncoder.fit(
        [u.text for u in corpus], dim=args.dim, seed=args.seed, mask_token=args.mask_token
    )
    all_triples = corpus_triples(corpus, "all_spans", args.max_sp, args.mask_token)
    if not args.no_cl:
        positives = build_positive_pairs(all_triples)
        negatives = sample_negative_pairs(
            all_triples, positives, stage1_cfg.negatives_per_anchor, args.seed
        )
        pairs = positives + negatives
        if pairs:
            train_stage1(encoder, pairs, stage1_cfg, log_path=out / "stage1_log.jsonl")
        else:
            log.warning("no contrastive pairs could be built; skipping stage 1")
    save_checkpoint(encoder, out / "encoder")

    if args.no_filter:
        ds2 = build_step2_training_set(
            all_triples, encoder, corpus.ontology, include_none=True,
            none_cap_per_sentence=stage2_cfg.none_cap_per_sentence, seed=args.seed,
        )
    else:
        ds1 = build_step1_training_set(
            all_triples, encoder,
            none_cap_per_sentence=stage2_cfg.none_cap_per_sentence, seed=args.seed,
        )
        step1 = train_mlp(ds1, stage2_cfg.step1.hidden_dims, stage2_cfg.step1, args.seed + 101)
        save_classifier(
            step1, out / "step1",
            encoder_name=encoder.name, encoder_dim=encoder.dim,
            threshold=stage2_cfg.step1.threshold,
        )
        ds2 = build_step2_training_set(all_triples, encoder, corpus.ontology, include_none=False)
    step2 = train_mlp(ds2, stage2_cfg.step2.hidden_dims, stage2_cfg.step2, args.seed + 202)
    save_classifier(step2, out / "step2", encoder_name=encoder.name, encoder_dim=encoder.dim)
    print(json.dumps({"models": str(out), "train_size": len(corpus)}))
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    encoder = load_checkpoint(args.encoder)
    step2, _ = load_classifier(args.step2)
    step1 = None
    threshold = args.threshold
    if not args.no_filter:
        if args.step1 is None:
            raise SystemExit("--step1 is required unless --no-filter is given")
        step1, manifest = load_classifier(args.step1)
        if threshold is None:
            threshold = manifest.get("threshold") or 0.5
    cfg = PipelineConfig(
        use_step1_filter=not args.no_filter,
        max_sp=args.max_sp,
        mask_token=args.mask_token,
        step1_threshold=threshold if threshold is not None else 0.5,
    )
    corpus = load_corpus(args.input, "test")
    predictions = predict_corpus(encoder, step1, step2, corpus, cfg)
    out_path = args.output or (str(args.input) + ".pred.jsonl")
    write_predictions_jsonl(out_path, predictions)
    print(json.dumps({"predictions": str(out_path), "utterances": len(predictions)}))
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    gold_corpus = load_corpus(args.gold, "test")
    gold = [list(u.labels) for u in gold_corpus]
    pred_path = Path(args.pred)
    first = pred_path.read_text(encoding="utf-8").lstrip()[:1]
    if first == "{":
        records = read_predictions_jsonl(pred_path)
        pred = [r["predicted_labels"] for r in records]
    else:
        pred_corpus = load_corpus(pred_path, "test")
        pred = [list(u.labels) for u in pred_corpus]
    report = token_micro_f1(gold, pred)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = exp.ExperimentConfig.from_json(args.config)
    report = exp.run_experiment(cfg, args.report)
    print(json.dumps({"report": str(report)}))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    encoder = load_checkpoint(args.encoder)
    step1, manifest = load_classifier(args.step1)
    step2_filtered, _ = load_classifier(args.step2_filtered)
    step2_unfiltered, _ = load_classifier(args.step2_unfiltered)
    corpus = load_corpus(args.input, "test")
    cfg = PipelineConfig(
        max_sp=args.max_sp,
        mask_token=args.mask_token,
        step1_threshold=manifest.get("threshold") or 0.5,
    )
    report = exp.bench_filtering(
        encoder, step1, step2_filtered, step2_unfiltered, corpus, cfg
    )
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
        print(json.dumps({"report": args.output}))
    else:
        print(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanslot",
        description="Few-shot slot labeling via contrastive span encoding "
        "and two-step span classification.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the bundled synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--split", default="train", choices=["train", "dev", "test"])
    p.add_argument("--tag-column", type=int, default=1)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="train encoder and classifiers, save checkpoints")
    p.add_argument("--train", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--m", type=int, default=None, help="few-shot sample size")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--max-sp", type=int, default=5)
    p.add_argument("--mask-token", default="[MASK]")
    p.add_argument("--no-cl", action="store_true", help="skip contrastive tuning")
    p.add_argument(
        "--no-filter", action="store_true",
        help="train a single classifier with a no-slot class instead of the filter",
    )
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="label a column file with trained models")
    p.add_argument("--encoder", required=True)
    p.add_argument("--step1", default=None)
    p.add_argument("--step2", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--max-sp", type=int, default=5)
    p.add_argument("--mask-token", default="[MASK]")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="token micro-F1 of predictions vs gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="run an experiment grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench", help="filtering cost/quality benchmark")
    p.add_argument("--encoder", required=True)
    p.add_argument("--step1", required=True)
    p.add_argument("--step2-filtered", required=True)
    p.add_argument("--step2-unfiltered", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--max-sp", type=int, default=5)
    p.add_argument("--mask-token", default="[MASK]")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
