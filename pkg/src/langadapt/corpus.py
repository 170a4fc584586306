"""Unlabeled corpus preparation: cleaning, sampling, filtering and statistics."""

from __future__ import annotations

import json
import logging
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .wordpiece import Vocabulary, tokenize_word, word_counts

logger = logging.getLogger(__name__)


@dataclass
class RawDocument:
    doc_id: str
    lines: list[str]
    contiguous: bool = True


@dataclass
class SentenceRecord:
    tokens: list[str]
    source_doc: str = ""
    index_in_doc: int = 0

    def __post_init__(self):
        if self.index_in_doc < 0:
            raise ValueError("index_in_doc must be non-negative")


@dataclass
class CorpusStats:
    n_sentences: int
    n_tokens: int
    wp_per_token: float
    unk_tokens: int


_DOC_DELIM = re.compile(r"^\s*</?doc(\s[^>]*)?>\s*$", re.IGNORECASE)
_HEADER = re.compile(r"^\s*(=+[^=].*?=+|Section::::.*)\s*$")
_CATEGORY = re.compile(r"^\s*(\[\[\s*)?(Category|Catégorie|Kategorie|Kategorija|Catagóir|Thể loại)\s*:", re.IGNORECASE)
_TAG = re.compile(r"<[^<>]*>")
_WS = re.compile(r"\s+")


def _strip_tags(text: str) -> str:
    prev = None
    while prev != text:
        prev, text = text, _TAG.sub(" ", text)
    return text


def _is_markup_line(line: str) -> bool:
    return bool(_DOC_DELIM.match(line) or _HEADER.match(line) or _CATEGORY.match(line))


def clean_wiki_document(doc: RawDocument) -> list[str]:
    """Strip extraction markup from one article and split it at periods.

    Removed: ``<doc ...>``/``</doc>`` delimiters, the title line that follows
    a start delimiter, ``== header ==`` / ``Section::::`` lines, category
    lines and HTML tags.  Periods are consumed as split points.  Each line
    is one paragraph of extracted text, so sentences never span lines.
    """
    kept = []
    after_start = False
    for line in doc.lines:
        if _DOC_DELIM.match(line):
            after_start = not line.lstrip().startswith("</")
            continue
        if after_start and line.strip():
            after_start = False
            continue  # article title
        if _is_markup_line(line):
            continue
        text = _strip_tags(line)
        if text.strip():
            kept.append(text)
    sentences = []
    for text in kept:
        for chunk in text.split("."):
            sent = _WS.sub(" ", chunk).strip()
            if sent and not _is_markup_line(sent):
                sentences.append(sent)
    return sentences


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def subsample_articles(docs: Sequence[RawDocument], fraction: float, seed: int) -> list[RawDocument]:
    """Pick ``round(fraction * len(docs))`` whole articles, kept in source order."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    k = _round_half_up(fraction * len(docs))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(docs), size=k, replace=False))
    return [docs[i] for i in chosen]


def filter_sentences(
    sentences: Iterable[SentenceRecord],
    eval_sentences: set[tuple[str, ...]],
    min_len: int = 5,
    max_len: int = 50,
    apply_length_filter: bool = False,
) -> list[SentenceRecord]:
    out = []
    for s in sentences:
        if tuple(s.tokens) in eval_sentences:
            continue
        if apply_length_filter and not min_len <= len(s.tokens) <= max_len:
            continue
        out.append(s)
    return out


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def basic_tokenize(text: str) -> list[str]:
    tokens = []
    for chunk in text.split():
        buf = []
        for ch in chunk:
            if _is_punct(ch):
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.append("".join(buf))
    return tokens


def compute_corpus_stats(corpus: Sequence[SentenceRecord], vocab: Vocabulary) -> CorpusStats:
    counts = word_counts(corpus)
    n_tokens = sum(counts.values())
    if n_tokens == 0:
        raise ValueError("corpus statistics are undefined for an empty corpus")
    pieces = 0
    unk = 0
    for word, freq in counts.items():
        tw = tokenize_word(word, vocab)
        pieces += freq * len(tw.piece_ids)
        if tw.unk_count:
            unk += freq
    return CorpusStats(
        n_sentences=len(corpus),
        n_tokens=n_tokens,
        wp_per_token=pieces / n_tokens,
        unk_tokens=unk,
    )


# -- file formats ---------------------------------------------------------------

def read_wiki_dump(path: str | Path) -> list[RawDocument]:
    """Documents from a JSON-lines file of ``{doc_id, text}`` or blank-line separated text."""
    text = Path(path).read_text(encoding="utf-8")
    docs = []
    first = text.lstrip()[:1]
    if first == "{":
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            docs.append(RawDocument(str(rec.get("doc_id", n)), rec["text"].splitlines(), True))
    else:
        for n, block in enumerate(re.split(r"\n\s*\n", text)):
            lines = [ln for ln in block.splitlines() if ln.strip()]
            if lines:
                docs.append(RawDocument(f"doc{n}", lines, True))
    return docs


def read_forum_corpus(path: str | Path) -> list[RawDocument]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [RawDocument(f"line{i}", [ln], False) for i, ln in enumerate(lines) if ln.strip()]


def read_sentence_file(path: str | Path) -> list[SentenceRecord]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        toks = line.split()
        if toks:
            out.append(SentenceRecord(toks, Path(path).name, i))
    return out


def write_sentence_file(path: str | Path, sentences: Iterable[SentenceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(" ".join(s.tokens) + "\n")


def prepare_corpus(
    docs: Sequence[RawDocument],
    eval_sentences: set[tuple[str, ...]] = frozenset(),
    fmt: str = "wiki",
    sample_fraction: float = 1.0,
    seed: int = 0,
    min_len: int = 5,
    max_len: int = 50,
) -> list[SentenceRecord]:
    """Full cleaning path for a wiki dump or a forum line corpus."""
    if fmt not in ("wiki", "forum"):
        raise ValueError(f"unknown corpus format {fmt!r}")
    if sample_fraction < 1.0:
        docs = subsample_articles(docs, sample_fraction, seed)
    records = []
    for doc in docs:
        texts = clean_wiki_document(doc) if fmt == "wiki" else [
            _WS.sub(" ", _strip_tags(ln)).strip() for ln in doc.lines
        ]
        for i, text in enumerate(t for t in texts if t):
            toks = basic_tokenize(text)
            if toks:
                records.append(SentenceRecord(toks, doc.doc_id, i))
    kept = filter_sentences(records, set(eval_sentences), min_len, max_len, apply_length_filter=fmt == "forum")
    logger.info("kept %d of %d sentences from %d documents", len(kept), len(records), len(docs))
    return kept
