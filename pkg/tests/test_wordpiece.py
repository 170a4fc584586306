import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langadapt.wordpiece import (
    N_RESERVED,
    N_UNUSED,
    Vocabulary,
    count_unknowns,
    tokenize_sentence,
    tokenize_word,
    train_vocabulary,
)

from oracles import longest_match_oracle


def vocab_of(*pieces):
    return Vocabulary.from_pieces(pieces)


def pieces_of(tw, vocab):
    return [vocab.piece(i) for i in tw.piece_ids]


class TestVocabulary:
    def test_reserved_layout(self):
        v = vocab_of("a")
        assert len(v.unused_slot_ids) == N_UNUSED
        assert v.piece(v.unused_slot_ids[0]) == "[unused0]"
        assert v.piece(v.unused_slot_ids[-1]) == "[unused98]"
        assert len(v) == N_RESERVED + 1
        assert [v.id_of(p) for p in v.pieces] == list(range(len(v)))

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(list(vocab_of("a").pieces) + ["a"])

    def test_missing_special_rejected(self):
        pieces = [p for p in vocab_of("a").pieces if p != "[MASK]"]
        with pytest.raises(ValueError):
            Vocabulary(pieces)

    def test_file_round_trip(self, tmp_path):
        v = vocab_of("a", "##b", "ab")
        v.save(tmp_path / "vocab.txt")
        assert Vocabulary.load(tmp_path / "vocab.txt") == v
        lines = (tmp_path / "vocab.txt").read_text(encoding="utf-8").splitlines()
        assert lines[v.unk_id] == "[UNK]"


class TestTokenizeWord:
    def test_whole_word(self):
        v = vocab_of("ab", "a", "##b")
        tw = tokenize_word("ab", v)
        assert pieces_of(tw, v) == ["ab"] and tw.unk_count == 0

    def test_split(self):
        v = vocab_of("a", "##b")
        assert pieces_of(tokenize_word("ab", v), v) == ["a", "##b"]

    def test_per_character_unknown(self):
        v = vocab_of("##y")
        tw = tokenize_word("xy", v)
        assert pieces_of(tw, v) == ["[UNK]", "##y"]
        assert tw.unk_count == 1

    def test_whole_word_unknown_switch(self):
        v = vocab_of("##y")
        tw = tokenize_word("xy", v, unk_mode="word")
        assert pieces_of(tw, v) == ["[UNK]"]

    def test_empty_word(self):
        with pytest.raises(ValueError):
            tokenize_word("", vocab_of("a"))

    def test_unused_slots_never_emitted(self):
        v = vocab_of("a")
        tw = tokenize_word("[unused3]", v)
        assert all(v.piece(i) != "[unused3]" for i in tw.piece_ids)
        assert tokenize_word("[UNK]", v).unk_count == 5


class TestTokenizeSentence:
    def test_alignment(self):
        v = vocab_of("a", "##b")
        ids, spans = tokenize_sentence(["ab"], v)
        assert [v.piece(i) for i in ids] == ["a", "##b"]
        assert spans == [(0, 2)]

    def test_empty(self):
        assert tokenize_sentence([], vocab_of("a")) == ([], [])

    @given(st.lists(st.text("abc", min_size=1, max_size=6), max_size=8))
    def test_spans_partition(self, tokens):
        v = vocab_of("a", "##a", "ab", "##bc", "c")
        ids, spans = tokenize_sentence(tokens, v)
        pos = 0
        for start, length in spans:
            assert start == pos and length >= 1
            pos += length
        assert pos == len(ids)


def random_toy_vocab(rng, alphabet="abcd", n_pieces=8, closed=False):
    pieces = set()
    for _ in range(n_pieces):
        s = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 3)))
        pieces.add(("##" if rng.random() < 0.5 else "") + s)
    if closed:
        for c in {c for p in pieces for c in p.replace("##", "")}:
            pieces.update({c, "##" + c})
    return vocab_of(*sorted(pieces))


def test_greedy_matches_exhaustive_oracle():
    rng = random.Random(7)
    for _ in range(2000):
        v = random_toy_vocab(rng)
        word = "".join(rng.choice("abcde") for _ in range(rng.randint(1, 7)))
        matchable = {p for p in v.pieces if v.is_matchable(p)}
        assert pieces_of(tokenize_word(word, v), v) == longest_match_oracle(word, matchable)


@given(st.text("abcd", min_size=1, max_size=10), st.integers(0, 10_000))
def test_round_trip_without_unknowns(word, seed):
    v = random_toy_vocab(random.Random(seed), closed=True)
    tw = tokenize_word(word, v)
    if tw.unk_count == 0:
        assert "".join(p.removeprefix("##") for p in pieces_of(tw, v)) == word


@given(st.text("abcd", min_size=1, max_size=10), st.integers(0, 10_000))
def test_no_longer_piece_matches(word, seed):
    v = random_toy_vocab(random.Random(seed))
    pos = 0
    for p in pieces_of(tokenize_word(word, v), v):
        if p == "[UNK]":
            pos += 1
            continue
        body = p.removeprefix("##") if pos else p
        prefix = "##" if pos else ""
        for end in range(pos + len(body) + 1, len(word) + 1):
            assert not v.is_matchable(prefix + word[pos:end])
        pos += len(body)


@settings(max_examples=200)
@given(st.text("abcdxy", min_size=1, max_size=10), st.integers(0, 10_000),
       st.lists(st.text("abcdxy", min_size=1, max_size=3), max_size=4))
def test_adding_pieces_to_closed_vocab_never_adds_unknowns(word, seed, extra):
    v = random_toy_vocab(random.Random(seed), closed=True)
    more = sorted({("##" if i % 2 else "") + e for i, e in enumerate(extra)} - set(v.pieces))
    bigger = vocab_of(*[p for p in v.pieces if v.is_matchable(p)], *more)
    assert tokenize_word(word, bigger).unk_count <= tokenize_word(word, v).unk_count


class TestTrainVocabulary:
    def test_merge_order_on_repeated_word(self):
        v = train_vocabulary([["aaab"]] * 10, N_RESERVED + 4 + 1)
        learned = list(v.pieces[N_RESERVED:])
        assert {"a", "##a", "##b"} <= set(learned)
        assert learned[-1] == "##aa"

    def test_forced_inventory_only(self):
        corpus = [["ab", "ba"]] * 3
        v = train_vocabulary(corpus, N_RESERVED + 4)
        assert set(v.pieces[N_RESERVED:]) == {"a", "b", "##a", "##b"}

    def test_too_small(self):
        with pytest.raises(ValueError):
            train_vocabulary([["abc"]], N_RESERVED + 5)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            train_vocabulary([], 5000)

    def test_deterministic(self):
        corpus = [["lorem", "ipsum", "dolor"], ["sit", "amet", "lorem"]] * 4
        assert train_vocabulary(corpus, 160) == train_vocabulary(corpus, 160)

    def test_exact_size_when_merges_available(self):
        corpus = [["abcdefgh", "hgfedcba"]] * 5
        v = train_vocabulary(corpus, N_RESERVED + 16 + 5)
        assert len(v) == N_RESERVED + 16 + 5

    def test_stops_when_no_pair_repeats(self):
        v = train_vocabulary([["ab"]], 500)
        assert len(v) == N_RESERVED + 4

    def test_trained_vocab_covers_corpus(self):
        corpus = [["kitab", "kutub"], ["maktab", "kataba"]] * 3
        assert count_unknowns(corpus, train_vocabulary(corpus, 150)) == 0


class TestCountUnknowns:
    def test_all_known(self):
        assert count_unknowns([["ab"]], vocab_of("a", "##b")) == 0

    def test_single(self):
        assert count_unknowns([["ab", "az"]], vocab_of("a", "##b")) == 1
