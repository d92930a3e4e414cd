"""Shared fixtures: fixture datasets and small locally built checkpoints.

Everything runs offline; encoder checkpoints are created from scratch on the
fixture corpus, so no test depends on network access.
"""

import os
import random
from pathlib import Path

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import pytest

from toxspan import corpus, neural

DATA_DIR = Path(__file__).parent / "data"

TOXIC_WORDS = ("fucking", "stupid", "idiot", "silly", "moron", "pathetic")
CLEAN_WORDS = (
    "this", "is", "crazy", "the", "garden", "meeting", "coffee", "report",
    "morning", "window", "river", "music", "letter", "just", "completely",
    "really", "weather", "neighbour", "again", "quiet", "you're", "honestly",
)


def make_span_posts(n: int, seed: int, toxic_rate: float = 0.8) -> list[corpus.Post]:
    """Synthetic posts with exact gold offsets over a fixed toxic vocabulary."""
    rng = random.Random(seed)
    posts = []
    for i in range(n):
        words = [rng.choice(CLEAN_WORDS) for _ in range(rng.randint(4, 9))]
        if rng.random() < toxic_rate:
            for _ in range(rng.randint(1, 2)):
                words.insert(rng.randrange(len(words) + 1), rng.choice(TOXIC_WORDS))
        offsets: list[int] = []
        pieces = []
        pos = 0
        for j, word in enumerate(words):
            if j:
                pieces.append(" ")
                pos += 1
            pieces.append(word)
            if word in TOXIC_WORDS:
                offsets.extend(range(pos, pos + len(word)))
            pos += len(word)
        pieces.append(rng.choice([".", "!!", "?", ""]))
        posts.append(
            corpus.Post(
                id=str(i),
                text="".join(pieces),
                gold_spans=corpus.SpanSet.from_iterable(offsets),
            )
        )
    return posts


def make_span_dataset(n: int, seed: int, toxic_rate: float = 0.8) -> corpus.Dataset:
    return corpus.Dataset(
        name=f"synthetic-{n}",
        language="en",
        granularity=corpus.Granularity.SPAN,
        posts=tuple(make_span_posts(n, seed, toxic_rate)),
    )


@pytest.fixture(scope="session")
def table1_path() -> Path:
    return DATA_DIR / "table1.csv"


@pytest.fixture(scope="session")
def table1(table1_path) -> corpus.Dataset:
    return corpus.parse_span_csv(table1_path, name="table1-fixture")


@pytest.fixture(scope="session")
def fixture_dataset() -> corpus.Dataset:
    """96 synthetic span-annotated posts sharing one small vocabulary."""
    return make_span_dataset(96, seed=11)


@pytest.fixture(scope="session")
def overfit_dataset(fixture_dataset) -> corpus.Dataset:
    return corpus.Dataset(
        name="overfit-32",
        language="en",
        granularity=corpus.Granularity.SPAN,
        posts=fixture_dataset.posts[:32],
    )


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, fixture_dataset) -> Path:
    """Small randomly initialized encoder built on the fixture vocabulary."""
    out = tmp_path_factory.mktemp("checkpoints") / "tiny-base"
    return neural.create_base_checkpoint(
        [p.text for p in fixture_dataset.posts],
        out,
        vocab_size=600,
        hidden_size=64,
        num_layers=2,
        num_heads=2,
        intermediate_size=128,
        max_positions=256,
        seed=0,
    )


@pytest.fixture(scope="session")
def adapted_checkpoint(tmp_path_factory, tiny_checkpoint, fixture_dataset) -> Path:
    """The tiny encoder after masked-LM adaptation on the fixture corpus."""
    cfg = neural.ModelConfig(
        base_checkpoint=str(tiny_checkpoint),
        learning_rate=5e-4,
        epochs=3,
        max_seq_length=64,
        batch_size=8,
    )
    out = tmp_path_factory.mktemp("checkpoints") / "tiny-adapted"
    report = neural.mlm_adapt([p.text for p in fixture_dataset.posts], cfg, out, seed=1)
    assert report.adapted_loss < report.base_loss
    return Path(report.checkpoint_dir)


@pytest.fixture(scope="session")
def train_config(adapted_checkpoint) -> neural.ModelConfig:
    """Overfit-friendly configuration for the tiny encoder."""
    return neural.ModelConfig(
        base_checkpoint=str(adapted_checkpoint),
        learning_rate=1e-3,
        epochs=30,
        max_seq_length=64,
        batch_size=8,
        eval_steps=8,
        seeds=(7, 8, 9, 10, 11),
    )


@pytest.fixture(scope="session")
def trained_model(overfit_dataset, train_config) -> neural.SpanModel:
    """Tiny span model memorizing the 32-post subset (early stopping off)."""
    return neural.train(overfit_dataset, train_config, seed=7, early_stopping=False)


@pytest.fixture(scope="session")
def trained_model_dir(tmp_path_factory, trained_model) -> Path:
    out = tmp_path_factory.mktemp("artifacts") / "tiny-span-model"
    trained_model.save(out)
    return out


@pytest.fixture(autouse=True, scope="session")
def _quiet_transformers():
    import transformers

    transformers.logging.set_verbosity_error()
