"""Synthetic challenge-shaped data builders shared across the test modules."""

import json
import random

import numpy as np
import pytest

from clickbait_gru.ingest import Judgment, Label, LabeledDataset, PostRecord
from clickbait_gru.nn import Model, init_model
from clickbait_gru.text import EmbeddingTable, Vocabulary

# five-decimal encoding used by the challenge files
LEVEL_ENC = {0.0: 0.0, 1 / 3: 0.33333, 2 / 3: 0.66667, 1.0: 1.0}

WORDS = [
    "you", "won't", "believe", "what", "this", "trick", "does", "scientists",
    "hate", "him", "the", "council", "approved", "a", "budget", "report",
    "quarterly", "earnings", "rose", "market", "closed", "higher", "quiz",
    "photos", "shocking", "officials", "said", "study", "finds", "new",
]


def make_record(rec_id: str, text: str, **kwargs) -> PostRecord:
    return PostRecord(id=rec_id, post_text=[text], **kwargs)


def make_judgment(levels) -> Judgment:
    """Judgment from five raw level values, median-consistent label."""
    scores = tuple(LEVEL_ENC[lv] for lv in levels)
    median = sorted(scores)[2]
    label = Label.CLICKBAIT if median >= 0.5 else Label.NO_CLICKBAIT
    return Judgment(
        scores=scores, mean=sum(scores) / 5.0, median=median, class_label=label
    )


def synth_dataset(n: int, seed: int = 0, clickbait_every: int = 3) -> LabeledDataset:
    """Valid dataset of n posts; every clickbait_every-th record is clickbait.

    Clickbait posts carry a marker word and score levels in {2/3, 1}; the rest
    use {0, 1/3}. All labels satisfy the median rule by construction.
    """
    rnd = random.Random(seed)
    records = []
    for i in range(n):
        bait = i % clickbait_every == 0
        pool = (2 / 3, 1.0) if bait else (0.0, 1 / 3)
        levels = [rnd.choice(pool) for _ in range(5)]
        text = " ".join(rnd.choice(WORDS) for _ in range(rnd.randint(3, 9)))
        if bait:
            text = "wow " + text
        records.append((make_record(str(1000 + i), text), make_judgment(levels)))
    return LabeledDataset(records=records, name=f"synth{n}")


def write_glove(path, words, d: int, seed: int = 1) -> None:
    rnd = random.Random(seed)
    with open(path, "w", encoding="utf-8") as f:
        for w in words:
            vec = " ".join(f"{rnd.uniform(-0.5, 0.5):.5f}" for _ in range(d))
            f.write(f"{w} {vec}\n")


def tiny_model(
    vocab_size: int = 10,
    d: int = 4,
    h: int = 3,
    seed: int = 0,
    dtype=np.float64,
    **dropout,
) -> Model:
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, 0.3, (vocab_size, d)).astype(dtype)
    matrix[0] = 0.0
    return init_model(EmbeddingTable(matrix=matrix), h, seed=seed, **dropout)


@pytest.fixture
def dataset60() -> LabeledDataset:
    return synth_dataset(60, seed=5)


@pytest.fixture
def challenge_dir(tmp_path, dataset60):
    """Directory with instances.jsonl + truth.jsonl for the synthetic dataset."""
    from clickbait_gru.ingest import write_dataset

    path = tmp_path / "data"
    write_dataset(dataset60, str(path))
    return path


@pytest.fixture
def glove_file(tmp_path):
    path = tmp_path / "glove.txt"
    write_glove(path, WORDS + ["wow"], d=8)
    return path


def results_file(path, pairs) -> None:
    """Write a predictions JSONL of (id, score) pairs."""
    with open(path, "w", encoding="utf-8") as f:
        for rec_id, score in pairs:
            f.write(json.dumps({"id": rec_id, "clickbaitScore": score}) + "\n")
