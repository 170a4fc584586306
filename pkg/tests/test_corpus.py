import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from langadapt.corpus import (
    CorpusStats,
    RawDocument,
    SentenceRecord,
    basic_tokenize,
    clean_wiki_document,
    compute_corpus_stats,
    filter_sentences,
    prepare_corpus,
    read_wiki_dump,
    subsample_articles,
)
from langadapt.wordpiece import Vocabulary


def doc(*lines):
    return RawDocument("d", list(lines))


class TestClean:
    def test_markup_removed_and_split(self):
        d = doc('<doc id="1" title="T">', "Title", "<br>", "== Header ==", "A b. C d.", "</doc>")
        assert clean_wiki_document(d) == ["A b", "C d"]

    def test_header_and_html(self):
        assert clean_wiki_document(doc("<br>", "== Section ==", "A b. C d.")) == ["A b", "C d"]

    def test_category_lines(self):
        d = doc("Text one.", "[[Category:Birds]]", "Category: Fish")
        assert clean_wiki_document(d) == ["Text one"]

    def test_inline_tags(self):
        assert clean_wiki_document(doc("x <b>bold</b> y.")) == ["x bold y"]

    def test_empty(self):
        assert clean_wiki_document(doc()) == []

    def test_no_period(self):
        assert clean_wiki_document(doc("One sentence without period")) == ["One sentence without period"]

    @given(st.lists(st.lists(st.sampled_from(list("ab .<>=/[]:") + ["Category:", "<br>", "== h =="]),
                             max_size=12).map("".join), max_size=6))
    def test_idempotent(self, lines):
        once = clean_wiki_document(doc(*lines))
        assert clean_wiki_document(doc(*once)) == once


class TestSubsample:
    docs = [RawDocument(str(i), [f"line {i}"]) for i in range(100)]

    def test_identity(self):
        assert subsample_articles(self.docs, 1.0, 0) == self.docs

    def test_five_percent(self):
        assert len(subsample_articles(self.docs, 0.05, 3)) == 5

    def test_deterministic(self):
        a = subsample_articles(self.docs, 0.3, 9)
        assert a == subsample_articles(self.docs, 0.3, 9)
        assert [d.doc_id for d in a] == sorted((d.doc_id for d in a), key=int)

    @pytest.mark.parametrize("f", [-0.1, 1.5])
    def test_bad_fraction(self, f):
        with pytest.raises(ValueError):
            subsample_articles(self.docs, f, 0)

    @given(st.integers(0, 60), st.floats(0, 1))
    def test_size_rounds_half_up(self, n, f):
        docs = self.docs[:n]
        k = len(subsample_articles(docs, f, 1))
        assert abs(k - f * n) <= 0.5 + 1e-9


class TestFilter:
    def rec(self, n, start=0):
        return SentenceRecord([f"w{i}" for i in range(start, start + n)])

    def test_length_boundaries(self):
        kept = filter_sentences([self.rec(4), self.rec(5), self.rec(50), self.rec(51)], set(),
                                apply_length_filter=True)
        assert [len(s.tokens) for s in kept] == [5, 50]

    def test_length_filter_off(self):
        assert len(filter_sentences([self.rec(2)], set())) == 1

    def test_eval_overlap(self):
        s = self.rec(6)
        assert filter_sentences([s, self.rec(6, 1)], {tuple(s.tokens)}) == [self.rec(6, 1)]

    def test_case_sensitive(self):
        s = SentenceRecord(["A", "b"])
        assert filter_sentences([s], {("a", "b")}) == [s]

    @given(st.lists(st.integers(1, 60), max_size=30))
    def test_order_preserved(self, lengths):
        recs = [SentenceRecord([f"t{i}"] * n, index_in_doc=i) for i, n in enumerate(lengths)]
        kept = filter_sentences(recs, set(), apply_length_filter=True)
        idx = [r.index_in_doc for r in kept]
        assert idx == sorted(idx)


class TestBasicTokenize:
    def test_punctuation(self):
        assert basic_tokenize("Hello, world!") == ["Hello", ",", "world", "!"]

    def test_empty(self):
        assert basic_tokenize("") == []

    def test_whitespace(self):
        assert basic_tokenize("a    b") == ["a", "b"]

    def test_unicode_punctuation(self):
        assert basic_tokenize("«x»—y") == ["«", "x", "»", "—", "y"]

    @given(st.text())
    def test_no_empty_or_whitespace_tokens(self, text):
        for tok in basic_tokenize(text):
            assert tok and not any(c.isspace() for c in tok)


class TestStats:
    vocab = Vocabulary.from_pieces(["a", "##b", "##a", "b", "c"])

    def test_two_pieces(self):
        stats = compute_corpus_stats([SentenceRecord(["ab"])], self.vocab)
        assert stats == CorpusStats(1, 1, 2.0, 0)

    def test_unknown_counted_once(self):
        # "xax" -> [UNK] ##a [UNK]
        stats = compute_corpus_stats([SentenceRecord(["xax"])], self.vocab)
        assert stats.unk_tokens == 1 and stats.wp_per_token == 3.0

    def test_mean(self):
        stats = compute_corpus_stats([SentenceRecord(["c", "abab"])], self.vocab)
        assert stats.wp_per_token == 2.5
        stats = compute_corpus_stats([SentenceRecord(["c", "aba"])], self.vocab)
        assert stats.wp_per_token == 2.0

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_corpus_stats([], self.vocab)

    @given(st.lists(st.lists(st.text("abcxy", min_size=1, max_size=6), min_size=1, max_size=5), min_size=1, max_size=8))
    def test_bounds(self, sents):
        stats = compute_corpus_stats([SentenceRecord(s) for s in sents], self.vocab)
        assert stats.unk_tokens <= stats.n_tokens
        assert stats.wp_per_token >= 1.0


def test_prepare_forum_and_wiki(tmp_path):
    p = tmp_path / "dump.jsonl"
    p.write_text("\n".join(json.dumps({"doc_id": str(i), "text": f"== H ==\nAlpha beta gamma {i}. Delta."})
                           for i in range(4)), encoding="utf-8")
    docs = read_wiki_dump(p)
    assert len(docs) == 4
    sents = prepare_corpus(docs, eval_sentences={("Delta",)})
    assert [s.tokens for s in sents][:1] == [["Alpha", "beta", "gamma", "0"]]
    assert all(s.tokens != ["Delta"] for s in sents)
    forum = [RawDocument(f"l{i}", [t], False) for i, t in enumerate(["too short", "this one has enough tokens ok"])]
    assert [s.tokens for s in prepare_corpus(forum, fmt="forum")] == [["this", "one", "has", "enough", "tokens", "ok"]]
