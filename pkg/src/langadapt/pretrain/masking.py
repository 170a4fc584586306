"""Masked-LM instance creation and the shard file format."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..wordpiece import Vocabulary, tokenize_sentence

logger = logging.getLogger(__name__)

SHARD_FORMAT = "langadapt-mlm-shard"
SHARD_VERSION = 1
SHARD_FIELDS = ("input_ids", "attention_mask", "masked_positions", "masked_labels")


@dataclass
class PretrainingInstance:
    input_ids: list[int]
    attention_mask: list[int]
    masked_positions: list[int]
    masked_labels: list[int]


@dataclass
class MaskingConfig:
    max_seq: int = 128
    max_pred: int = 20
    mask_prob: float = 0.15
    dup_factor: int = 5
    mask_token_frac: float = 0.8
    random_token_frac: float = 0.1

    def __post_init__(self):
        for name in ("mask_prob", "mask_token_frac", "random_token_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.mask_token_frac + self.random_token_frac > 1.0:
            raise ValueError("mask and random fractions exceed 1")


def num_to_mask(content_len: int, mask_prob: float, max_pred: int) -> int:
    # round half up, at least one prediction
    return min(max_pred, max(1, int(math.floor(mask_prob * content_len + 0.5 + 1e-9))))


def mask_sequence(
    piece_ids: Sequence[int], vocab: Vocabulary, config: MaskingConfig, rng: np.random.Generator,
    replacement_ids: np.ndarray | None = None,
) -> PretrainingInstance:
    content = list(piece_ids)[: config.max_seq - 2]
    ids = [vocab.cls_id] + content + [vocab.sep_id]
    n_mask = num_to_mask(len(content), config.mask_prob, config.max_pred)
    positions = np.sort(rng.choice(len(content), size=n_mask, replace=False) + 1)
    if replacement_ids is None:
        replacement_ids = np.asarray(vocab.content_ids())
    labels = []
    for pos in positions:
        labels.append(ids[pos])
        u = rng.random()
        if u < config.mask_token_frac:
            ids[pos] = vocab.mask_id
        elif u < config.mask_token_frac + config.random_token_frac:
            ids[pos] = int(replacement_ids[rng.integers(len(replacement_ids))])
    return PretrainingInstance(
        input_ids=ids,
        attention_mask=[1] * len(ids),
        masked_positions=[int(p) for p in positions],
        masked_labels=labels,
    )


def build_instances(sentences, vocab: Vocabulary, config: MaskingConfig | None = None, seed: int = 0):
    """``dup_factor`` independently masked copies of every sentence.

    Randomness for sentence ``i`` comes from a generator seeded with
    ``(seed, i)`` so the output does not depend on processing order.
    """
    config = config or MaskingConfig()
    replacement_ids = np.asarray(vocab.content_ids())
    out = []
    for i, sent in enumerate(sentences):
        tokens = getattr(sent, "tokens", sent)
        pieces, _ = tokenize_sentence(tokens, vocab)
        if not pieces:
            logger.warning("sentence %d has no content pieces; skipped", i)
            continue
        rng = np.random.default_rng([seed, i])
        for _ in range(config.dup_factor):
            out.append(mask_sequence(pieces, vocab, config, rng, replacement_ids))
    return out


def write_shard(path: str | Path, instances: Iterable[PretrainingInstance], vocab_hash: str = "") -> None:
    with open(path, "w", encoding="utf-8") as f:
        header = {"format": SHARD_FORMAT, "version": SHARD_VERSION, "fields": list(SHARD_FIELDS),
                  "vocab_hash": vocab_hash}
        f.write(json.dumps(header) + "\n")
        for inst in instances:
            f.write(json.dumps([getattr(inst, k) for k in SHARD_FIELDS]) + "\n")


def read_shard(path: str | Path) -> list[PretrainingInstance]:
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        if header.get("format") != SHARD_FORMAT:
            raise ValueError(f"{path}: not a masked-LM shard")
        if header.get("version") != SHARD_VERSION:
            raise ValueError(f"{path}: unsupported shard version {header.get('version')}")
        fields = header["fields"]
        out = []
        for line in f:
            if line.strip():
                out.append(PretrainingInstance(**dict(zip(fields, json.loads(line)))))
    return out
