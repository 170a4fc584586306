"""Filling a model vocabulary's unused slots with target-language wordpieces."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .wordpiece import N_UNUSED, Vocabulary, count_unknowns, tokenize_word, train_vocabulary, word_counts


@dataclass(frozen=True)
class AugmentationCandidate:
    piece: str
    weighted_count: int


@dataclass
class AugmentationReport:
    unk_before: int
    unk_after: int
    pieces_added: list[str]
    fallback_used: int = 0

    def to_dict(self) -> dict:
        return {
            "unk_before": self.unk_before,
            "unk_after": self.unk_after,
            "pieces_added": list(self.pieces_added),
            "fallback_used": self.fallback_used,
        }


def improved_words(corpus, orig_vocab: Vocabulary, new_vocab: Vocabulary):
    """Words whose tokenization under ``new_vocab`` has strictly fewer unknowns.

    Returns ``(word, frequency, new_piece_ids)`` triples sorted by word.
    """
    out = []
    for word, freq in sorted(word_counts(corpus).items()):
        old = tokenize_word(word, orig_vocab)
        if not old.unk_count:
            continue
        new = tokenize_word(word, new_vocab)
        if new.unk_count < old.unk_count:
            out.append((word, freq, new.piece_ids))
    return out


def _eligible(piece: str, orig_vocab: Vocabulary, new_vocab: Vocabulary) -> bool:
    return new_vocab.is_matchable(piece) and piece not in orig_vocab


def rank_candidates(
    improved, orig_vocab: Vocabulary, new_vocab: Vocabulary, weighting: str = "token"
) -> list[AugmentationCandidate]:
    if weighting not in ("token", "type"):
        raise ValueError(f"weighting must be 'token' or 'type', got {weighting!r}")
    counts: Counter = Counter()
    for _word, freq, piece_ids in improved:
        w = freq if weighting == "token" else 1
        for pid in piece_ids:
            piece = new_vocab.piece(pid)
            if _eligible(piece, orig_vocab, new_vocab):
                counts[piece] += w
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [AugmentationCandidate(p, c) for p, c in ranked]


def _fallback_order(corpus, orig_vocab: Vocabulary, new_vocab: Vocabulary) -> list[str]:
    usage: Counter = Counter()
    if corpus is not None:
        for word, freq in word_counts(corpus).items():
            for pid in tokenize_word(word, new_vocab).piece_ids:
                usage[new_vocab.piece(pid)] += freq
    pool = [p for p in new_vocab.pieces if _eligible(p, orig_vocab, new_vocab)]
    return sorted(pool, key=lambda p: (-usage[p], p))


def select_pieces(
    improved,
    orig_vocab: Vocabulary,
    new_vocab: Vocabulary,
    k: int = N_UNUSED,
    corpus=None,
    weighting: str = "token",
) -> list[str]:
    """Top-``k`` new pieces by (frequency-weighted) occurrence in improved words.

    When fewer than ``k`` candidates exist the remaining ranks are taken from
    the pieces most used when tokenizing ``corpus`` with ``new_vocab``.
    """
    chosen = [c.piece for c in rank_candidates(improved, orig_vocab, new_vocab, weighting)[:k]]
    if len(chosen) < k:
        taken = set(chosen)
        for p in _fallback_order(corpus, orig_vocab, new_vocab):
            if len(chosen) == k:
                break
            if p not in taken:
                chosen.append(p)
                taken.add(p)
    if len(chosen) < k:
        raise ValueError(
            f"only {len(chosen)} fillable pieces available for {k} slots (short by {k - len(chosen)})"
        )
    return chosen


def apply_augmentation(vocab: Vocabulary, pieces: list[str]) -> Vocabulary:
    slots = vocab.unused_slot_ids
    if len(pieces) != N_UNUSED or len(slots) != N_UNUSED:
        raise ValueError(
            f"augmentation needs {N_UNUSED} pieces and {N_UNUSED} free slots, "
            f"got {len(pieces)} pieces and {len(slots)} slots"
        )
    if len(set(pieces)) != len(pieces):
        raise ValueError("augmentation pieces contain duplicates")
    clash = [p for p in pieces if p in vocab]
    if clash:
        raise ValueError(f"pieces already in vocabulary: {clash[:5]}")
    return vocab.with_slots(dict(zip(slots, pieces)))


def augmentation_report(corpus, orig_vocab: Vocabulary, aug_vocab: Vocabulary, fallback_used: int = 0):
    return AugmentationReport(
        unk_before=count_unknowns(corpus, orig_vocab),
        unk_after=count_unknowns(corpus, aug_vocab),
        pieces_added=[aug_vocab.piece(i) for i in aug_vocab.filled_slot_ids
                      if aug_vocab.piece(i) != orig_vocab.piece(i)],
        fallback_used=fallback_used,
    )


def augment_vocabulary(
    corpus,
    orig_vocab: Vocabulary,
    new_size: int = 5000,
    k: int = N_UNUSED,
    weighting: str = "token",
    new_vocab: Vocabulary | None = None,
) -> tuple[Vocabulary, AugmentationReport]:
    """Train a target vocabulary on ``corpus`` and pour its best pieces into the free slots."""
    if new_vocab is None:
        new_vocab = train_vocabulary(corpus, new_size)
    improved = improved_words(corpus, orig_vocab, new_vocab)
    n_candidates = len(rank_candidates(improved, orig_vocab, new_vocab, weighting))
    pieces = select_pieces(improved, orig_vocab, new_vocab, k, corpus=corpus, weighting=weighting)
    aug = apply_augmentation(orig_vocab, pieces)
    return aug, augmentation_report(corpus, orig_vocab, aug, fallback_used=max(0, k - n_candidates))
