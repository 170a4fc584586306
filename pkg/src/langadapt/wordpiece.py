"""Wordpiece vocabularies: training, greedy tokenization and unknown counting."""

from __future__ import annotations

import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
N_UNUSED = 99
CONTINUATION = "##"
MAX_PIECE_CHARS = 100


def unused_piece(i: int) -> str:
    return f"[unused{i}]"


def _reserved_inventory() -> list[str]:
    # Same layout as the original multilingual BERT vocabulary file.
    return [PAD] + [unused_piece(i) for i in range(N_UNUSED)] + [UNK, CLS, SEP, MASK]


N_RESERVED = len(SPECIAL_TOKENS) + N_UNUSED


class Vocabulary:
    """Immutable ordered wordpiece inventory.

    Ids ``1..99`` are the reserved slots.  A slot counts as unused while it
    still holds its ``[unusedK]`` placeholder; placeholders and special tokens
    never take part in matching.
    """

    def __init__(self, pieces: Sequence[str], slot_ids: Sequence[int] | None = None):
        pieces = tuple(pieces)
        id_of = {}
        for i, p in enumerate(pieces):
            if p in id_of:
                raise ValueError(f"duplicate piece {p!r} at ids {id_of[p]} and {i}")
            id_of[p] = i
        for tok in SPECIAL_TOKENS:
            if tok not in id_of:
                raise ValueError(f"special token {tok} missing from vocabulary")
        if slot_ids is None:
            slot_ids = [id_of[unused_piece(i)] for i in range(N_UNUSED)]
        slot_ids = tuple(int(i) for i in slot_ids)
        if len(slot_ids) != N_UNUSED or len(set(slot_ids)) != N_UNUSED:
            raise ValueError(f"expected {N_UNUSED} distinct slot ids, got {len(slot_ids)}")
        if any(not 0 <= i < len(pieces) for i in slot_ids):
            raise ValueError("slot id out of range")
        self._pieces = pieces
        self._id_of = id_of
        self._slot_ids = slot_ids
        self._reserved = frozenset(SPECIAL_TOKENS) | {
            pieces[i] for k, i in enumerate(slot_ids) if pieces[i] == unused_piece(k)
        }
        self.max_piece_chars = min(
            MAX_PIECE_CHARS,
            max((len(_strip(p)) for p in pieces if p not in self._reserved), default=1),
        )

    # -- lookup --------------------------------------------------------
    @property
    def pieces(self) -> tuple[str, ...]:
        return self._pieces

    def __len__(self) -> int:
        return len(self._pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self._id_of

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self._pieces == other._pieces
            and self._slot_ids == other._slot_ids
        )

    def __hash__(self) -> int:
        return hash((self._pieces, self._slot_ids))

    def id_of(self, piece: str) -> int:
        return self._id_of[piece]

    def get(self, piece: str, default=None):
        return self._id_of.get(piece, default)

    def piece(self, idx: int) -> str:
        return self._pieces[idx]

    def is_matchable(self, piece: str) -> bool:
        return piece in self._id_of and piece not in self._reserved

    @property
    def pad_id(self) -> int:
        return self._id_of[PAD]

    @property
    def unk_id(self) -> int:
        return self._id_of[UNK]

    @property
    def cls_id(self) -> int:
        return self._id_of[CLS]

    @property
    def sep_id(self) -> int:
        return self._id_of[SEP]

    @property
    def mask_id(self) -> int:
        return self._id_of[MASK]

    @property
    def special_ids(self) -> tuple[int, ...]:
        return tuple(self._id_of[t] for t in SPECIAL_TOKENS)

    @property
    def slot_ids(self) -> tuple[int, ...]:
        """All 99 reserved slot positions, replaced or not."""
        return self._slot_ids

    @property
    def unused_slot_ids(self) -> tuple[int, ...]:
        return tuple(i for i in self._slot_ids if self._pieces[i] in self._reserved)

    @property
    def filled_slot_ids(self) -> tuple[int, ...]:
        return tuple(i for i in self._slot_ids if self._pieces[i] not in self._reserved)

    def content_ids(self) -> list[int]:
        """Ids that can be produced by tokenization (everything but reserved entries)."""
        return [i for i, p in enumerate(self._pieces) if p not in self._reserved]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self._pieces:
            h.update(p.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()[:16]

    def with_slots(self, replacements: dict[int, str]) -> "Vocabulary":
        pieces = list(self._pieces)
        for idx, p in replacements.items():
            pieces[idx] = p
        return Vocabulary(pieces, self._slot_ids)

    # -- io --------------------------------------------------------------
    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(p + "\n" for p in self._pieces), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        # Slots keep their reserved line positions 1..99 once filled.
        return cls(lines, slot_ids=range(1, N_UNUSED + 1))

    @classmethod
    def from_pieces(cls, pieces: Iterable[str]) -> "Vocabulary":
        """Reserved inventory followed by ``pieces`` (duplicates of reserved entries dropped)."""
        inventory = _reserved_inventory()
        seen = set(inventory)
        for p in pieces:
            if p not in seen:
                inventory.append(p)
                seen.add(p)
        return cls(inventory)


def _strip(piece: str) -> str:
    return piece[len(CONTINUATION):] if piece.startswith(CONTINUATION) else piece


@dataclass(frozen=True)
class TokenizedWord:
    word: str
    piece_ids: tuple[int, ...]
    unk_count: int


def tokenize_word(word: str, vocab: Vocabulary, unk_mode: str = "char") -> TokenizedWord:
    """Greedy longest-match-first segmentation of a single word.

    With ``unk_mode="char"`` an unmatched position yields one [UNK] for one
    character and matching resumes after it.  ``unk_mode="word"`` collapses
    any word containing an unknown to a single [UNK].
    """
    if not word:
        raise ValueError("cannot tokenize an empty word")
    unk = vocab.unk_id
    ids: list[int] = []
    n_unk = 0
    start = 0
    n = len(word)
    while start < n:
        prefix = CONTINUATION if start > 0 else ""
        end = min(n, start + vocab.max_piece_chars)
        found = None
        while end > start:
            cand = prefix + word[start:end]
            if vocab.is_matchable(cand):
                found = vocab.id_of(cand)
                break
            end -= 1
        if found is None:
            ids.append(unk)
            n_unk += 1
            start += 1
        else:
            ids.append(found)
            start = end
    if n_unk and unk_mode == "word":
        return TokenizedWord(word, (unk,), 1)
    if unk_mode not in ("char", "word"):
        raise ValueError(f"unknown unk_mode {unk_mode!r}")
    return TokenizedWord(word, tuple(ids), n_unk)


def tokenize_sentence(
    tokens: Sequence[str], vocab: Vocabulary, unk_mode: str = "char"
) -> tuple[list[int], list[tuple[int, int]]]:
    piece_ids: list[int] = []
    spans: list[tuple[int, int]] = []
    for tok in tokens:
        tw = tokenize_word(tok, vocab, unk_mode)
        spans.append((len(piece_ids), len(tw.piece_ids)))
        piece_ids.extend(tw.piece_ids)
    return piece_ids, spans


def word_counts(corpus) -> Counter:
    """Token frequencies over an iterable of SentenceRecords or token lists."""
    counts: Counter = Counter()
    for sent in corpus:
        counts.update(getattr(sent, "tokens", sent))
    return counts


def count_unknowns(corpus, vocab: Vocabulary, unk_mode: str = "char") -> int:
    total = 0
    for word, freq in word_counts(corpus).items():
        if tokenize_word(word, vocab, unk_mode).unk_count:
            total += freq
    return total


# -- training ---------------------------------------------------------------

def _merge_symbols(left: str, right: str) -> str:
    return left + _strip(right)


def train_vocabulary(corpus, target_size: int = 5000) -> Vocabulary:
    """Learn a wordpiece inventory by frequency-driven adjacent-pair merging.

    The inventory always holds the reserved entries plus both the
    word-initial and the ``##`` form of every observed character; merges
    fill the rest until ``target_size`` is reached or no pair occurs twice.
    """
    counts = word_counts(corpus)
    if not counts:
        raise ValueError("cannot train a vocabulary on an empty corpus")

    chars = sorted({c for w in counts for c in w})
    alphabet = [c for c in chars] + [CONTINUATION + c for c in chars]
    forced = N_RESERVED + len(alphabet)
    if target_size < forced:
        raise ValueError(
            f"target_size {target_size} is smaller than the forced inventory of {forced} "
            f"({N_RESERVED} reserved + {len(alphabet)} character pieces)"
        )
    pieces = _reserved_inventory() + alphabet
    known = set(pieces)

    words = sorted(counts)
    freqs = [counts[w] for w in words]
    segs = [[w[0]] + [CONTINUATION + c for c in w[1:]] for w in words]

    pair_freq: dict[tuple[str, str], int] = defaultdict(int)
    pair_words: dict[tuple[str, str], set[int]] = defaultdict(set)
    sym_freq: dict[str, int] = defaultdict(int)
    for wi, seg in enumerate(segs):
        f = freqs[wi]
        for s in seg:
            sym_freq[s] += f
        for pair in zip(seg, seg[1:]):
            pair_freq[pair] += f
            pair_words[pair].add(wi)

    def add(seg, wi, sign):
        f = freqs[wi] * sign
        for s in seg:
            sym_freq[s] += f
        for pair in zip(seg, seg[1:]):
            pair_freq[pair] += f
            if sign > 0:
                pair_words[pair].add(wi)

    while len(pieces) < target_size:
        best = None
        best_key = None
        for pair, f in pair_freq.items():
            if f < 2:
                continue
            # highest frequency, then more frequent left symbol, then smallest merged string
            key = (f, sym_freq[pair[0]])
            if best is None or key > best_key or (
                key == best_key and _merge_symbols(*pair) < _merge_symbols(*best)
            ):
                best, best_key = pair, key
        if best is None:
            break
        merged = _merge_symbols(*best)
        for wi in sorted(pair_words.pop(best, ())):
            seg = segs[wi]
            add(seg, wi, -1)
            out = []
            i = 0
            while i < len(seg):
                if i + 1 < len(seg) and seg[i] == best[0] and seg[i + 1] == best[1]:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seg[i])
                    i += 1
            segs[wi] = out
            add(out, wi, +1)
        pair_freq.pop(best, None)
        if merged not in known:
            known.add(merged)
            pieces.append(merged)
    return Vocabulary(pieces)
