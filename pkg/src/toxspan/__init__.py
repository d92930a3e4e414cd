"""Offensive-span detection toolkit.

Detects which characters make a text offensive: two-phase transformer
training (masked-LM adaptation, then a token-level classifier), span-level
F1 evaluation, lexicon and post-level baselines, a latency benchmark, and
an HTTP service backing a moderation console.
"""

from .alignment import (
    AlignedToken,
    LabeledSequence,
    TokenLabel,
    labels_to_spans,
    spans_to_labels,
    tokenize_with_offsets,
)
from .corpus import (
    ColumnSchema,
    Dataset,
    Granularity,
    Post,
    PostLabel,
    SpanSet,
    parse_post_tsv,
    parse_span_csv,
    read_jsonl,
    split_train_validation,
    write_jsonl,
)
from .lexicon import Lexicon, lexicon_detect, load_lexicon
from .metrics import EvalReport, SpanScore, evaluate_spans, macro_f1, span_f1
from .neural import (
    Device,
    ModelConfig,
    SpanModel,
    TokenPrediction,
    create_base_checkpoint,
    ensemble_predict,
    mlm_adapt,
    train,
)
from .postlevel import evaluate_cross_domain, to_post_label
from .registry import ModelCard, Registry

__version__ = "0.1.0"

__all__ = [
    "AlignedToken",
    "ColumnSchema",
    "Dataset",
    "Device",
    "EvalReport",
    "Granularity",
    "LabeledSequence",
    "Lexicon",
    "ModelCard",
    "ModelConfig",
    "Post",
    "PostLabel",
    "Registry",
    "SpanModel",
    "SpanScore",
    "SpanSet",
    "TokenLabel",
    "TokenPrediction",
    "create_base_checkpoint",
    "ensemble_predict",
    "evaluate_cross_domain",
    "evaluate_spans",
    "labels_to_spans",
    "lexicon_detect",
    "load_lexicon",
    "macro_f1",
    "mlm_adapt",
    "parse_post_tsv",
    "parse_span_csv",
    "read_jsonl",
    "span_f1",
    "spans_to_labels",
    "split_train_validation",
    "to_post_label",
    "tokenize_with_offsets",
    "train",
    "write_jsonl",
]
