"""Two-phase token-classification models for offensive spans.

Phase A continues masked-language-model pretraining of an encoder checkpoint
on in-domain text; phase B fine-tunes a token-level linear classifier over
the adapted encoder's last hidden states. Multiple seeds can be trained and
combined by per-token majority vote.

Subword convention: a surface token's predicted label is read from its first
subtoken's logits; during training every subtoken of a toxic surface token
carries the TOXIC label.
"""

from __future__ import annotations

import copy
import json
import logging
import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Sequence

import torch
from torch.optim.lr_scheduler import LambdaLR

from .alignment import (
    AlignedToken,
    LabeledSequence,
    TokenLabel,
    labels_to_spans,
    spans_to_labels,
    tokenize_with_offsets,
)
from .corpus import Dataset, Granularity, Post, SpanSet, split_train_validation
from .errors import DataError, FetchError, ToxspanError

logger = logging.getLogger(__name__)

LABEL_NOT = 0
LABEL_TOXIC = 1
ID2LABEL = {LABEL_NOT: "NOT", LABEL_TOXIC: "TOXIC"}

CONFIG_FILE = "toxspan_config.json"
METADATA_FILE = "toxspan_metadata.json"


class Device(Enum):
    CPU = "cpu"
    ACCELERATOR = "accelerator"


@dataclass(frozen=True)
class ModelConfig:
    """Training and inference hyperparameters.

    Defaults follow the tuned recipe: lr 1e-5 for 3 epochs, sequences capped
    at 140 subword tokens, early stopping after 10 evaluations without
    validation-loss improvement, five seeds for the mode ensemble.
    """

    base_checkpoint: str
    learning_rate: float = 1e-5
    epochs: int = 3
    adam_epsilon: float = 1e-8
    warmup_ratio: float = 0.1
    warmup_steps: int = 0
    max_grad_norm: float = 1.0
    max_seq_length: int = 140
    gradient_accumulation_steps: int = 1
    early_stop_patience: int = 10
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    mlm_mask_probability: float = 0.15
    device: Device = Device.CPU
    batch_size: int = 8
    eval_steps: int = 32

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.mlm_mask_probability < 1:
            raise ValueError(
                f"mlm_mask_probability must be in (0, 1), got {self.mlm_mask_probability}"
            )
        if self.max_seq_length < 2:
            raise ValueError(f"max_seq_length must be >= 2, got {self.max_seq_length}")
        if self.batch_size < 1 or self.gradient_accumulation_steps < 1:
            raise ValueError("batch_size and gradient_accumulation_steps must be >= 1")

    def to_dict(self) -> dict:
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data["device"] = self.device.value
        data["seeds"] = list(self.seeds)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        data = dict(data)
        if "device" in data:
            data["device"] = Device(data["device"])
        if "seeds" in data:
            data["seeds"] = tuple(data["seeds"])
        return cls(**data)

    def torch_device(self) -> torch.device:
        if self.device is Device.CPU:
            return torch.device("cpu")
        if not torch.cuda.is_available():
            raise ToxspanError("accelerator requested but no CUDA device is available")
        return torch.device("cuda")


@dataclass(frozen=True)
class TokenPrediction:
    """Per-surface-token class probabilities and argmax labels for one text."""

    tokens: tuple[AlignedToken, ...]
    probabilities: tuple[tuple[float, float], ...]  # (p_not, p_toxic) per token

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.probabilities):
            raise ValueError("one probability pair required per token")
        for p_not, p_toxic in self.probabilities:
            if abs(p_not + p_toxic - 1.0) > 1e-6:
                raise ValueError(f"probabilities must sum to 1, got {(p_not, p_toxic)}")


@dataclass(frozen=True)
class MlmReport:
    """Held-out masked-LM losses before and after adaptation."""

    checkpoint_dir: str
    base_loss: float
    adapted_loss: float
    perplexity: float
    n_train_texts: int
    n_holdout_texts: int

    def to_dict(self) -> dict:
        return {
            "checkpoint_dir": self.checkpoint_dir,
            "base_loss": self.base_loss,
            "adapted_loss": self.adapted_loss,
            "perplexity": self.perplexity,
            "n_train_texts": self.n_train_texts,
            "n_holdout_texts": self.n_holdout_texts,
        }


def _load_pretrained(model_cls, checkpoint: str, **kwargs):
    from transformers import AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        model = model_cls.from_pretrained(checkpoint, **kwargs)
    except (OSError, ValueError) as exc:
        raise FetchError(f"cannot resolve checkpoint {checkpoint!r}: {exc}") from exc
    return tokenizer, model


def create_base_checkpoint(
    texts: Sequence[str],
    out_dir: str | Path,
    *,
    vocab_size: int = 2000,
    hidden_size: int = 64,
    num_layers: int = 2,
    num_heads: int = 2,
    intermediate_size: int = 128,
    max_positions: int = 512,
    seed: int = 0,
) -> Path:
    """Build a small randomly initialized encoder checkpoint from raw texts.

    Trains a WordPiece tokenizer on ``texts`` and pairs it with a compact
    BERT-style masked-LM encoder. Useful for offline experimentation and for
    tests; run :func:`mlm_adapt` on it to obtain a usable pretrained base.
    """
    if not texts:
        raise DataError("cannot build a tokenizer from an empty corpus")
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors, trainers
    from transformers import BertConfig, BertForMaskedLM, PreTrainedTokenizerFast

    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    wp = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    wp.normalizer = normalizers.Sequence([normalizers.NFC(), normalizers.Lowercase()])
    wp.pre_tokenizer = pre_tokenizers.Whitespace()
    wp.train_from_iterator(
        texts, trainers.WordPieceTrainer(vocab_size=vocab_size, special_tokens=specials)
    )
    wp.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", wp.token_to_id("[CLS]")), ("[SEP]", wp.token_to_id("[SEP]"))],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=wp,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
        model_max_length=max_positions,
    )

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(tokenizer),
        hidden_size=hidden_size,
        num_hidden_layers=num_layers,
        num_attention_heads=num_heads,
        intermediate_size=intermediate_size,
        max_position_embeddings=max_positions,
    )
    model = BertForMaskedLM(config)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tokenizer.save_pretrained(out_dir)
    model.save_pretrained(out_dir)
    return out_dir


def _linear_warmup_schedule(optimizer, warmup: int, total: int) -> LambdaLR:
    def lr_lambda(step: int) -> float:
        if step < warmup:
            return step / max(1, warmup)
        return max(0.0, (total - step) / max(1, total - warmup))

    return LambdaLR(optimizer, lr_lambda)


def _warmup_steps(cfg: ModelConfig, total_steps: int) -> int:
    if cfg.warmup_steps > 0:
        return cfg.warmup_steps
    return int(cfg.warmup_ratio * total_steps)


# --------------------------------------------------------------------------
# Phase A: masked-LM adaptation
# --------------------------------------------------------------------------


def _mask_for_mlm(
    input_ids: torch.Tensor,
    special_mask: torch.Tensor,
    mask_token_id: int,
    vocab_size: int,
    probability: float,
    generator: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Standard MLM corruption: of the selected tokens, 80% become the mask
    token, 10% a random token, 10% stay unchanged."""
    labels = input_ids.clone()
    prob = torch.full(labels.shape, probability)
    prob.masked_fill_(special_mask, 0.0)
    selected = torch.bernoulli(prob, generator=generator).bool()
    if not selected.any():
        # Degenerate short batch: force one maskable position so the loss is defined.
        candidates = (~special_mask).nonzero()
        if len(candidates) == 0:
            return input_ids, torch.full_like(labels, -100)
        i, j = candidates[0].tolist()
        selected[i, j] = True
    labels[~selected] = -100

    masked = torch.bernoulli(torch.full(labels.shape, 0.8), generator=generator).bool() & selected
    input_ids = input_ids.clone()
    input_ids[masked] = mask_token_id
    randomized = (
        torch.bernoulli(torch.full(labels.shape, 0.5), generator=generator).bool()
        & selected
        & ~masked
    )
    random_ids = torch.randint(vocab_size, labels.shape, generator=generator)
    input_ids[randomized] = random_ids[randomized]
    return input_ids, labels


def _encode_texts(tokenizer, texts: Sequence[str], cfg: ModelConfig) -> list[dict]:
    encoded = []
    for text in texts:
        enc = tokenizer(text, truncation=True, max_length=cfg.max_seq_length)
        encoded.append({"input_ids": enc["input_ids"], "attention_mask": enc["attention_mask"]})
    return encoded


def _mlm_batches(tokenizer, encoded: list[dict], cfg: ModelConfig, order: list[int]):
    for start in range(0, len(order), cfg.batch_size):
        chunk = [encoded[i] for i in order[start : start + cfg.batch_size]]
        yield tokenizer.pad(chunk, return_tensors="pt")


def _mlm_loss(model, tokenizer, encoded: list[dict], cfg: ModelConfig, seed: int) -> float:
    """Mean masked-token loss with a fixed masking seed, so two models are
    comparable on the same slice."""
    generator = torch.Generator().manual_seed(seed)
    device = next(model.parameters()).device
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in _mlm_batches(tokenizer, encoded, cfg, list(range(len(encoded)))):
            special = torch.tensor(
                [
                    tokenizer.get_special_tokens_mask(ids, already_has_special_tokens=True)
                    for ids in batch["input_ids"].tolist()
                ],
                dtype=torch.bool,
            )
            input_ids, labels = _mask_for_mlm(
                batch["input_ids"],
                special,
                tokenizer.mask_token_id,
                len(tokenizer),
                cfg.mlm_mask_probability,
                generator,
            )
            if (labels != -100).sum() == 0:
                continue
            out = model(
                input_ids=input_ids.to(device),
                attention_mask=batch["attention_mask"].to(device),
                labels=labels.to(device),
            )
            n = int((labels != -100).sum())
            total += float(out.loss) * n
            count += n
    return total / max(1, count)


def mlm_adapt(
    corpus: Sequence[str],
    cfg: ModelConfig,
    out_dir: str | Path,
    *,
    seed: int | None = None,
) -> MlmReport:
    """Continue masked-LM pretraining of the base checkpoint on ``corpus``.

    A held-out slice (roughly 10%, minimum one text; the whole corpus when it
    is too small to split) is scored with the same masking before and after
    adaptation. The adapted encoder and tokenizer are saved to ``out_dir``.
    """
    if not corpus:
        raise DataError("mlm_adapt requires a non-empty corpus")
    from transformers import AutoModelForMaskedLM

    seed = cfg.seeds[0] if seed is None else seed
    torch.manual_seed(seed)
    tokenizer, model = _load_pretrained(AutoModelForMaskedLM, cfg.base_checkpoint)
    if tokenizer.mask_token_id is None:
        raise ToxspanError(
            f"checkpoint {cfg.base_checkpoint!r} has no mask token; cannot run MLM"
        )
    device = cfg.torch_device()
    model.to(device)

    texts = list(corpus)
    if len(texts) >= 5:
        shuffled = list(range(len(texts)))
        random.Random(seed).shuffle(shuffled)
        n_holdout = max(1, round(0.1 * len(texts)))
        holdout = [texts[i] for i in shuffled[:n_holdout]]
        train_texts = [texts[i] for i in shuffled[n_holdout:]]
    else:
        # Too small to split; score on the training texts themselves.
        holdout = texts
        train_texts = texts

    train_enc = _encode_texts(tokenizer, train_texts, cfg)
    holdout_enc = _encode_texts(tokenizer, holdout, cfg)
    base_loss = _mlm_loss(model, tokenizer, holdout_enc, cfg, seed)

    steps_per_epoch = -(-len(train_enc) // cfg.batch_size)
    total_steps = max(1, steps_per_epoch * cfg.epochs // cfg.gradient_accumulation_steps)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, eps=cfg.adam_epsilon)
    scheduler = _linear_warmup_schedule(optimizer, _warmup_steps(cfg, total_steps), total_steps)
    mask_generator = torch.Generator().manual_seed(seed)

    model.train()
    micro = 0
    for epoch in range(cfg.epochs):
        order = list(range(len(train_enc)))
        random.Random(seed * 1000 + epoch).shuffle(order)
        for batch in _mlm_batches(tokenizer, train_enc, cfg, order):
            special = torch.tensor(
                [
                    tokenizer.get_special_tokens_mask(ids, already_has_special_tokens=True)
                    for ids in batch["input_ids"].tolist()
                ],
                dtype=torch.bool,
            )
            input_ids, labels = _mask_for_mlm(
                batch["input_ids"],
                special,
                tokenizer.mask_token_id,
                len(tokenizer),
                cfg.mlm_mask_probability,
                mask_generator,
            )
            if (labels != -100).sum() == 0:
                continue
            out = model(
                input_ids=input_ids.to(device),
                attention_mask=batch["attention_mask"].to(device),
                labels=labels.to(device),
            )
            (out.loss / cfg.gradient_accumulation_steps).backward()
            micro += 1
            if micro % cfg.gradient_accumulation_steps == 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
                optimizer.step()
                scheduler.step()
                optimizer.zero_grad()

    adapted_loss = _mlm_loss(model, tokenizer, holdout_enc, cfg, seed)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    report = MlmReport(
        checkpoint_dir=str(out_dir),
        base_loss=base_loss,
        adapted_loss=adapted_loss,
        perplexity=float(torch.exp(torch.tensor(adapted_loss))),
        n_train_texts=len(train_texts),
        n_holdout_texts=len(holdout),
    )
    (out_dir / "mlm_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    logger.info(
        "MLM adaptation: held-out loss %.4f -> %.4f (perplexity %.2f)",
        base_loss,
        adapted_loss,
        report.perplexity,
    )
    return report


# --------------------------------------------------------------------------
# Phase B: token classification
# --------------------------------------------------------------------------


def _surface_example(post: Post) -> tuple[list[str], list[int]] | None:
    """Surface tokens and 0/1 labels for one annotated post; None if token-free."""
    seq = tokenize_with_offsets(post.text)
    if not seq.tokens:
        return None
    assert post.gold_spans is not None
    labeled = spans_to_labels(seq, post.gold_spans)
    words = labeled.surfaces()
    labels = [1 if t.label is TokenLabel.TOXIC else 0 for t in labeled.tokens]
    return words, labels


def _encode_classification_batch(
    tokenizer, examples: list[tuple[list[str], list[int]]], cfg: ModelConfig
) -> dict[str, torch.Tensor]:
    """Tokenize pre-split words and propagate each word's label to all of its
    subtokens; special tokens are ignored by the loss."""
    feats = []
    label_rows: list[list[int]] = []
    for words, word_labels in examples:
        enc = tokenizer(
            words, is_split_into_words=True, truncation=True, max_length=cfg.max_seq_length
        )
        row = [
            -100 if wid is None else word_labels[wid]
            for wid in enc.word_ids(0)
        ]
        feats.append({"input_ids": enc["input_ids"], "attention_mask": enc["attention_mask"]})
        label_rows.append(row)

    batch = tokenizer.pad(feats, return_tensors="pt")
    max_len = batch["input_ids"].shape[1]
    labels = torch.full((len(label_rows), max_len), -100, dtype=torch.long)
    for i, row in enumerate(label_rows):
        labels[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    batch["labels"] = labels
    return batch


def _classification_loss(model, tokenizer, examples, cfg: ModelConfig, device) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(examples), cfg.batch_size):
            batch = _encode_classification_batch(
                tokenizer, examples[start : start + cfg.batch_size], cfg
            )
            n = int((batch["labels"] != -100).sum())
            if n == 0:
                continue
            out = model(**{k: v.to(device) for k, v in batch.items()})
            total += float(out.loss) * n
            count += n
    model.train()
    return total / max(1, count)


class SpanModel:
    """A trained offensive-span model: adapted encoder plus token classifier."""

    def __init__(self, model, tokenizer, config: ModelConfig, metadata: dict | None = None):
        if model.config.num_labels != 2:
            raise ToxspanError(
                f"expected a 2-label token classification head, got {model.config.num_labels}"
            )
        self.model = model
        self.tokenizer = tokenizer
        self.config = config
        self.metadata = metadata or {}
        self.model.eval()

    @property
    def seed(self) -> int | None:
        return self.metadata.get("seed")

    def save(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.model.save_pretrained(out_dir)
        self.tokenizer.save_pretrained(out_dir)
        (out_dir / CONFIG_FILE).write_text(json.dumps(self.config.to_dict(), indent=2))
        (out_dir / METADATA_FILE).write_text(json.dumps(self.metadata, indent=2))
        return out_dir

    @classmethod
    def load(cls, artifact_dir: str | Path, *, device: Device | None = None) -> SpanModel:
        from transformers import AutoModelForTokenClassification

        artifact_dir = Path(artifact_dir)
        config_path = artifact_dir / CONFIG_FILE
        if not config_path.exists():
            raise FetchError(f"{artifact_dir} is not a span-model artifact (missing {CONFIG_FILE})")
        config = ModelConfig.from_dict(json.loads(config_path.read_text()))
        if device is not None:
            config = replace(config, device=device)
        tokenizer, model = _load_pretrained(
            AutoModelForTokenClassification, str(artifact_dir), num_labels=2
        )
        model.to(config.torch_device())
        metadata = {}
        metadata_path = artifact_dir / METADATA_FILE
        if metadata_path.exists():
            metadata = json.loads(metadata_path.read_text())
        return cls(model, tokenizer, config, metadata)

    def predict_tokens(self, text: str) -> TokenPrediction:
        """Per-surface-token probabilities; long texts are windowed with a
        half-window stride and merged by taking each token's most toxic view."""
        seq = tokenize_with_offsets(text)
        if not seq.tokens:
            return TokenPrediction(tokens=(), probabilities=())
        words = seq.surfaces()
        cfg = self.config
        enc = self.tokenizer(
            words,
            is_split_into_words=True,
            truncation=True,
            max_length=cfg.max_seq_length,
            stride=max(1, cfg.max_seq_length // 2),
            return_overflowing_tokens=True,
            padding=True,
            return_tensors="pt",
        )
        device = next(self.model.parameters()).device
        with torch.no_grad():
            logits = self.model(
                input_ids=enc["input_ids"].to(device),
                attention_mask=enc["attention_mask"].to(device),
            ).logits
        probs = torch.softmax(logits, dim=-1).cpu()

        best: dict[int, tuple[float, float]] = {}
        for w in range(probs.shape[0]):
            seen: set[int] = set()
            for pos, wid in enumerate(enc.word_ids(w)):
                if wid is None or wid in seen:
                    continue
                seen.add(wid)
                pair = (float(probs[w, pos, LABEL_NOT]), float(probs[w, pos, LABEL_TOXIC]))
                if wid not in best or pair[1] > best[wid][1]:
                    best[wid] = pair
        if len(best) != len(words):
            raise ToxspanError(
                f"windowed prediction covered {len(best)} of {len(words)} tokens"
            )

        tokens = []
        probabilities = []
        for i, tok in enumerate(seq.tokens):
            p_not, p_toxic = best[i]
            total = p_not + p_toxic
            p_not, p_toxic = p_not / total, p_toxic / total
            label = TokenLabel.TOXIC if p_toxic > p_not else TokenLabel.NOT
            tokens.append(replace(tok, label=label))
            probabilities.append((p_not, p_toxic))
        return TokenPrediction(tokens=tuple(tokens), probabilities=tuple(probabilities))

    def predict(self, text: str, merge_adjacent: bool = False) -> tuple[SpanSet, TokenPrediction]:
        """Offensive character offsets plus the underlying token predictions."""
        token_pred = self.predict_tokens(text)
        seq = LabeledSequence(text=text, tokens=token_pred.tokens)
        return labels_to_spans(seq, merge_adjacent=merge_adjacent), token_pred


def train(
    ds: Dataset,
    cfg: ModelConfig,
    seed: int,
    *,
    early_stopping: bool = True,
    validation_ratio: float = 0.2,
) -> SpanModel:
    """Fine-tune a token classifier on a span-annotated dataset.

    The dataset is split train/validation (default 0.8:0.2, seeded), labels
    are aligned from gold spans, and validation loss is checked every
    ``cfg.eval_steps`` optimizer steps. With early stopping on, training halts
    after ``cfg.early_stop_patience`` evaluations without improvement and the
    best validation-loss weights are restored.
    """
    if ds.granularity is not Granularity.SPAN:
        raise ValueError("train requires a SPAN dataset")
    if len(ds.posts) == 0:
        raise DataError("cannot train on an empty dataset")
    from transformers import AutoModelForTokenClassification

    started_at = datetime.now(timezone.utc).isoformat()
    torch.manual_seed(seed)

    if validation_ratio > 0 and len(ds.posts) >= 2:
        train_ds, val_ds = split_train_validation(ds, 1.0 - validation_ratio, seed)
    else:
        train_ds, val_ds = ds, None

    train_examples = [ex for ex in (_surface_example(p) for p in train_ds.posts) if ex]
    val_examples = (
        [ex for ex in (_surface_example(p) for p in val_ds.posts) if ex] if val_ds else []
    )
    if not train_examples:
        raise DataError("no trainable posts (all texts are empty or whitespace)")

    flat_labels = {l for _, labels in train_examples for l in labels}
    if len(flat_labels) < 2:
        logger.warning(
            "training data contains a single class (%s); the model will be degenerate",
            "TOXIC" if flat_labels == {1} else "NOT",
        )

    tokenizer, model = _load_pretrained(
        AutoModelForTokenClassification,
        cfg.base_checkpoint,
        num_labels=2,
        id2label=ID2LABEL,
        label2id={v: k for k, v in ID2LABEL.items()},
    )
    device = cfg.torch_device()
    model.to(device)

    steps_per_epoch = -(-len(train_examples) // cfg.batch_size)
    total_steps = max(1, steps_per_epoch * cfg.epochs // cfg.gradient_accumulation_steps)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, eps=cfg.adam_epsilon)
    scheduler = _linear_warmup_schedule(optimizer, _warmup_steps(cfg, total_steps), total_steps)

    loss_history: list[float] = []
    best_loss = float("inf")
    best_state: dict | None = None
    evals_since_best = 0
    stopped_early = False
    step = 0
    micro = 0

    model.train()
    for epoch in range(cfg.epochs):
        if stopped_early:
            break
        order = list(range(len(train_examples)))
        random.Random(seed * 1000 + epoch).shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = _encode_classification_batch(
                tokenizer, [train_examples[i] for i in order[start : start + cfg.batch_size]], cfg
            )
            out = model(**{k: v.to(device) for k, v in batch.items()})
            (out.loss / cfg.gradient_accumulation_steps).backward()
            micro += 1
            if micro % cfg.gradient_accumulation_steps != 0:
                continue
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()
            scheduler.step()
            optimizer.zero_grad()
            step += 1
            loss_history.append(out.loss.detach().item())

            if val_examples and step % cfg.eval_steps == 0:
                val_loss = _classification_loss(model, tokenizer, val_examples, cfg, device)
                if val_loss < best_loss:
                    best_loss = val_loss
                    best_state = copy.deepcopy(model.state_dict())
                    evals_since_best = 0
                else:
                    evals_since_best += 1
                if early_stopping and evals_since_best >= cfg.early_stop_patience:
                    logger.info(
                        "early stop at step %d (no improvement in %d evaluations)",
                        step,
                        evals_since_best,
                    )
                    stopped_early = True
                    break

    if val_examples:
        final_loss = _classification_loss(model, tokenizer, val_examples, cfg, device)
        if final_loss < best_loss:
            best_loss = final_loss
            best_state = copy.deepcopy(model.state_dict())
        if early_stopping and best_state is not None:
            model.load_state_dict(best_state)

    metadata = {
        "seed": seed,
        "base_checkpoint": cfg.base_checkpoint,
        "n_train_posts": len(train_examples),
        "n_validation_posts": len(val_examples),
        "stopped_early": stopped_early,
        "best_validation_loss": None if best_loss == float("inf") else best_loss,
        "loss_history": loss_history,
        "started_at": started_at,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    span_model = SpanModel(model, tokenizer, cfg, metadata)

    if val_ds is not None:
        from .metrics import span_f1

        scores = []
        for post in val_ds.posts:
            assert post.gold_spans is not None
            pred, _ = span_model.predict(post.text)
            scores.append(span_f1(pred, post.gold_spans).f1)
        metadata["validation_span_f1"] = sum(scores) / len(scores) if scores else None
    else:
        metadata["validation_span_f1"] = None
    return span_model


def ensemble_predict(
    models: Sequence[SpanModel], text: str, merge_adjacent: bool = False
) -> SpanSet:
    """Mode-of-seeds prediction: each surface token takes the majority label
    across models; ties go to NOT."""
    if not models:
        raise ValueError("ensemble_predict requires at least one model")
    seq = tokenize_with_offsets(text)
    if not seq.tokens:
        return SpanSet()

    votes = [0] * len(seq.tokens)
    for model in models:
        _, token_pred = model.predict(text)
        if len(token_pred.tokens) != len(seq.tokens):
            raise ToxspanError("ensemble members disagree on surface tokenization")
        for i, tok in enumerate(token_pred.tokens):
            if tok.label is TokenLabel.TOXIC:
                votes[i] += 1

    labeled = tuple(
        replace(
            tok,
            label=TokenLabel.TOXIC if 2 * votes[i] > len(models) else TokenLabel.NOT,
        )
        for i, tok in enumerate(seq.tokens)
    )
    return labels_to_spans(
        LabeledSequence(text=text, tokens=labeled), merge_adjacent=merge_adjacent
    )


def head_gradient_check(
    span_model: SpanModel,
    posts: Sequence[Post],
    *,
    eps: float = 1e-6,
) -> float:
    """Compare analytic classifier-head gradients with central finite
    differences on one batch; returns the maximum relative error.

    Runs in double precision on a copy of the model.
    """
    examples = [ex for ex in (_surface_example(p) for p in posts) if ex]
    if not examples:
        raise DataError("gradient check needs at least one non-empty post")
    model = copy.deepcopy(span_model.model).cpu().double()
    model.eval()  # keep dropout off so the loss is deterministic
    batch = _encode_classification_batch(span_model.tokenizer, examples, span_model.config)

    def loss_value() -> torch.Tensor:
        return model(**batch).loss

    head = model.classifier
    loss = loss_value()
    analytic = torch.autograd.grad(loss, [head.weight, head.bias])

    max_rel = 0.0
    with torch.no_grad():
        for param, grad in zip((head.weight, head.bias), analytic):
            flat = param.view(-1)
            for idx in range(flat.numel()):
                original = float(flat[idx])
                flat[idx] = original + eps
                up = float(loss_value())
                flat[idx] = original - eps
                down = float(loss_value())
                flat[idx] = original
                numeric = (up - down) / (2 * eps)
                a = float(grad.view(-1)[idx])
                denom = max(abs(a), abs(numeric), 1e-8)
                max_rel = max(max_rel, abs(a - numeric) / denom)
    return max_rel
