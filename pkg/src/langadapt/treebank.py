"""CoNLL-U input/output, treebank splitting and attachment scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)


class ConllUFormatError(ValueError):
    def __init__(self, message: str, source: str = "<string>", line: int | None = None):
        loc = f"{source}:{line}" if line is not None else source
        super().__init__(f"{loc}: {message}")
        self.source = source
        self.line = line


@dataclass(frozen=True)
class DependencyTree:
    """Heads are 1-based token indices with 0 for the artificial root."""

    heads: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.heads) != len(self.labels):
            raise ValueError("heads and labels differ in length")

    def __len__(self) -> int:
        return len(self.heads)

    def problems(self, single_root: bool = False) -> list[str]:
        return tree_problems(self.heads, single_root)

    def is_valid(self, single_root: bool = False) -> bool:
        return not self.problems(single_root)


def tree_problems(heads: Sequence[int], single_root: bool = False) -> list[str]:
    n = len(heads)
    errs = []
    for i, h in enumerate(heads, 1):
        if not 0 <= h <= n:
            errs.append(f"token {i}: head {h} out of range")
        elif h == i:
            errs.append(f"token {i}: self-loop")
    if errs:
        return errs
    n_roots = sum(1 for h in heads if h == 0)
    if n_roots == 0:
        errs.append("no token attached to the root")
    elif single_root and n_roots != 1:
        errs.append(f"{n_roots} tokens attached to the root")
    for i in range(1, n + 1):
        seen = set()
        j = i
        while j != 0:
            if j in seen:
                errs.append(f"cycle through token {i}")
                return errs
            seen.add(j)
            j = heads[j - 1]
    return errs


@dataclass
class TreebankSentence:
    tokens: list[str]
    gold: DependencyTree
    comments: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.tokens) != len(self.gold):
            raise ValueError(f"{len(self.tokens)} tokens but {len(self.gold)} heads")


@dataclass
class ScoreReport:
    uas: float
    las: float
    n_tokens: int


def parse_conllu(text: str, source: str = "<string>") -> list[TreebankSentence]:
    sentences = []
    comments: list[str] = []
    rows: list[tuple[int, list[str]]] = []

    def flush():
        if not rows:
            if comments:
                comments.clear()
            return
        heads = []
        for lineno, cols in rows:
            try:
                heads.append(int(cols[HEAD]))
            except ValueError:
                raise ConllUFormatError(f"non-integer HEAD {cols[HEAD]!r}", source, lineno) from None
        n = len(rows)
        for (lineno, cols), h in zip(rows, heads):
            if not 0 <= h <= n:
                raise ConllUFormatError(f"HEAD {h} out of range for {n} tokens", source, lineno)
        probs = [p for p in tree_problems(heads) if "cycle" in p or "self-loop" in p]
        if probs:
            raise ConllUFormatError(f"invalid gold tree ({probs[0]})", source, rows[0][0])
        tree = DependencyTree(tuple(heads), tuple(cols[DEPREL] for _, cols in rows))
        sentences.append(TreebankSentence([cols[FORM] for _, cols in rows], tree, list(comments)))
        rows.clear()
        comments.clear()

    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConllUFormatError(f"expected 10 columns, found {len(cols)}", source, lineno)
        if "-" in cols[ID] or "." in cols[ID]:
            continue  # multiword range or empty node
        try:
            tid = int(cols[ID])
        except ValueError:
            raise ConllUFormatError(f"bad token id {cols[ID]!r}", source, lineno) from None
        if tid != len(rows) + 1:
            raise ConllUFormatError(f"token id {tid} out of sequence", source, lineno)
        rows.append((lineno, cols))
    flush()
    return sentences


def read_conllu(path: str | Path) -> list[TreebankSentence]:
    return parse_conllu(Path(path).read_text(encoding="utf-8"), str(path))


def format_conllu(sentences: Sequence[TreebankSentence],
                  predictions: Sequence[DependencyTree] | None = None) -> str:
    if predictions is None:
        predictions = [s.gold for s in sentences]
    if len(predictions) != len(sentences):
        raise ValueError(f"{len(predictions)} predictions for {len(sentences)} sentences")
    out = []
    for sent, pred in zip(sentences, predictions):
        if len(pred) != len(sent.tokens):
            raise ValueError(f"prediction has {len(pred)} tokens, sentence has {len(sent.tokens)}")
        out.extend(sent.comments)
        for i, (form, h, lab) in enumerate(zip(sent.tokens, pred.heads, pred.labels), 1):
            out.append("\t".join([str(i), form, "_", "_", "_", "_", str(h), lab, "_", "_"]))
        out.append("")
    return "".join(line + "\n" for line in out)


def write_conllu(path: str | Path, sentences, predictions=None) -> None:
    Path(path).write_text(format_conllu(sentences, predictions), encoding="utf-8")


def split_treebank(sentences: Sequence, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Random train/valid/test partition; valid and test sizes are floored."""
    if not sentences:
        raise ValueError("cannot split an empty treebank")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(sentences)
    n_valid = int(math.floor(ratios[1] * n + 1e-9))
    n_test = int(math.floor(ratios[2] * n + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    valid = [sentences[i] for i in perm[:n_valid]]
    test = [sentences[i] for i in perm[n_valid:n_valid + n_test]]
    train = [sentences[i] for i in perm[n_valid + n_test:]]
    return train, valid, test


def score(predictions: Sequence[DependencyTree], gold: Sequence[DependencyTree],
          include_punct: bool = True, punct_labels=("punct",)) -> ScoreReport:
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predicted sentences vs {len(gold)} gold")
    total = ua = la = 0
    for k, (p, g) in enumerate(zip(predictions, gold)):
        if len(p) != len(g):
            raise ValueError(f"sentence {k}: {len(p)} predicted tokens vs {len(g)} gold")
        for ph, pl, gh, gl in zip(p.heads, p.labels, g.heads, g.labels):
            if not include_punct and gl in punct_labels:
                continue
            total += 1
            if ph == gh:
                ua += 1
                if pl == gl:
                    la += 1
    if total == 0:
        return ScoreReport(0.0, 0.0, 0)
    return ScoreReport(100.0 * ua / total, 100.0 * la / total, total)
