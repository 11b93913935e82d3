"""Few-shot slot labeling via contrastive span encoding and span classification.

Stage 1 specializes a pluggable sentence encoder with a margin-gated
contrastive loss over masked-sentence/span pairs; Stage 2 filters candidate
spans with a binary classifier and assigns slot types with a multi-class
one, then reconstructs BIO sequences.
"""

from .classifiers import (
    FilterConfig,
    MLPModel,
    Stage2Config,
    TyperConfig,
    VectorDataset,
    build_step1_training_set,
    build_step2_training_set,
    load_classifier,
    predict_binary,
    predict_slot_type,
    save_classifier,
    train_mlp,
)
from .contrastive import (
    CLBatchLossReport,
    CLPair,
    Stage1Config,
    build_positive_pairs,
    contrastive_loss,
    cosine_distance,
    encode_pair_item,
    encode_pair_items,
    sample_negative_pairs,
    sample_one_to_one_pairs,
    train_stage1,
)
from .corpus import (
    Corpus,
    SlotOntology,
    Utterance,
    corpus_stats,
    load_corpus,
    parse_bio_corpus,
    sample_few_shot,
    save_corpus,
    serialize_corpus,
    validate_bio,
)
from .encoders import (
    Encoder,
    ToyEncoder,
    TrainableEncoder,
    load_checkpoint,
    register_encoder,
    save_checkpoint,
)
from .errors import (
    BioValidationError,
    CheckpointError,
    ConfigError,
    EmptyCorpusError,
    ParseError,
    SpanSlotError,
    TrainingError,
)
from .experiment import (
    BenchReport,
    EncoderSpec,
    ExperimentConfig,
    bench_filtering,
    collect_cell_metrics,
    export_projection,
    run_experiment,
    synthetic_experiment_config,
)
from .metrics import F1Report, silhouette_score, token_micro_f1
from .pipeline import (
    PipelineConfig,
    SlotPrediction,
    predict_corpus,
    predict_spans,
    predict_utterance,
    reconstruct_bio,
    resolve_overlaps,
)
from .spans import (
    Span,
    SpanTriple,
    corpus_triples,
    enumerate_spans,
    gold_slot_spans,
    make_triples,
    render_masked,
)
from .synthetic import generate_synthetic_corpus, write_synthetic_dataset
from .token_baseline import (
    TokenBaselineConfig,
    TokenTaggerModel,
    make_tagset,
    predict_tags,
    repair_bio,
    train_token_baseline,
)

__version__ = "0.1.0"
