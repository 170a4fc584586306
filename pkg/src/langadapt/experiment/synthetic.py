"""Generated languages with gold dependency trees for desk-scale experiments.

Each language draws words for five open/closed classes from a shared
syllable inventory plus class-marking suffixes.  Sentences come from one
clause template: an obligatory subject, optional oblique, object and
adverb, then the verb.  Head-final languages put every dependent before
its head; head-initial ones mirror the order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import SentenceRecord
from ..treebank import DependencyTree, TreebankSentence

ONSETS = "bdfgklmnprstvz"
VOWELS = "aeiou"
OPEN_CLASSES = ("NOUN", "ADJ", "VERB", "ADV")


@dataclass
class SyntheticLanguage:
    name: str
    lexicon: dict[str, list[str]]
    head_final: bool = True
    zipf: float = 1.1
    probs: dict[str, float] = field(default_factory=lambda: {
        "obj": 0.6, "obl": 0.35, "adv": 0.3, "det": 0.5, "adj": 0.45, "poss": 0.2,
    })

    def _word(self, cls: str, rng: np.random.Generator) -> str:
        words = self.lexicon[cls]
        w = 1.0 / np.arange(1, len(words) + 1) ** self.zipf
        return words[rng.choice(len(words), p=w / w.sum())]

    def _np(self, rng, depth: int = 0):
        """A noun phrase as a small tree: (word, label, children) with the noun as head."""
        kids = []
        if depth == 0 and rng.random() < self.probs["poss"]:
            poss = self._np(rng, depth + 1)
            poss[2].append((self._word("GEN", rng), "case", []))
            kids.append((poss[0], "nmod", poss[2]))
        if rng.random() < self.probs["det"]:
            kids.append((self._word("DET", rng), "det", []))
        while rng.random() < self.probs["adj"] and len(kids) < 4:
            kids.append((self._word("ADJ", rng), "amod", []))
        return (self._word("NOUN", rng), "", kids)

    def _clause(self, rng):
        kids = []
        subj = self._np(rng)
        kids.append((subj[0], "nsubj", subj[2]))
        if rng.random() < self.probs["obl"]:
            obl = self._np(rng)
            obl[2].append((self._word("ADP", rng), "case", []))
            kids.append((obl[0], "obl", obl[2]))
        if rng.random() < self.probs["obj"]:
            obj = self._np(rng)
            kids.append((obj[0], "obj", obj[2]))
        if rng.random() < self.probs["adv"]:
            kids.append((self._word("ADV", rng), "advmod", []))
        return (self._word("VERB", rng), "root", kids)

    def _linearize(self, node, head_index, out):
        """Append words in surface order; returns this node's 1-based index."""
        word, label, kids = node
        kids = kids if self.head_final else list(reversed(kids))
        if self.head_final:
            # case markers follow their noun, everything else precedes the head
            pre = [k for k in kids if k[1] != "case"]
            post = [k for k in kids if k[1] == "case"]
        else:
            pre = [k for k in kids if k[1] == "case"]
            post = [k for k in kids if k[1] != "case"]
        slots = []
        for k in pre:
            slots.append(self._linearize(k, None, out))
        out.append([word, label, 0])
        me = len(out)
        for k in post:
            slots.append(self._linearize(k, None, out))
        for s in slots:
            out[s - 1][2] = me
        return me

    def sentence(self, rng: np.random.Generator) -> TreebankSentence:
        out: list[list] = []
        self._linearize(self._clause(rng), None, out)
        return TreebankSentence(
            tokens=[w for w, _, _ in out],
            gold=DependencyTree(tuple(h for _, _, h in out), tuple(l for _, l, _ in out)),
        )

    def treebank(self, n: int, seed: int) -> list[TreebankSentence]:
        rng = np.random.default_rng(seed)
        return [self.sentence(rng) for _ in range(n)]

    def corpus(self, n: int, seed: int) -> list[SentenceRecord]:
        return [SentenceRecord(s.tokens, self.name, i) for i, s in enumerate(self.treebank(n, seed))]


def _stem(rng, syllables=(1, 3)) -> str:
    k = int(rng.integers(syllables[0], syllables[1] + 1))
    return "".join(ONSETS[rng.integers(len(ONSETS))] + VOWELS[rng.integers(len(VOWELS))] for _ in range(k))


def make_language(name: str, seed: int, markers: dict[str, list[str]], sizes: dict[str, int],
                  head_final: bool = True, shared_stem_frac: float = 0.0,
                  closed: dict[str, list[str]] | None = None) -> SyntheticLanguage:
    """Build a lexicon: open-class words are ``stem + class marker``.

    A ``shared_stem_frac`` share of NOUN/ADJ/VERB stems is reused across all
    three classes so only the marker tells those words apart.
    """
    rng = np.random.default_rng(seed)
    used: set[str] = set()
    lexicon: dict[str, list[str]] = {c: [] for c in OPEN_CLASSES}

    def fresh():
        while True:
            s = _stem(rng)
            if s not in used:
                used.add(s)
                return s

    n_shared = int(round(shared_stem_frac * min(sizes["NOUN"], sizes["ADJ"], sizes["VERB"])))
    for _ in range(n_shared):
        s = fresh()
        for c in ("NOUN", "ADJ", "VERB"):
            lexicon[c].append(s + markers[c][rng.integers(len(markers[c]))])
    for c in OPEN_CLASSES:
        while len(lexicon[c]) < sizes[c]:
            lexicon[c].append(fresh() + markers[c][rng.integers(len(markers[c]))])
        order = rng.permutation(len(lexicon[c]))
        lexicon[c] = [lexicon[c][i] for i in order]
    closed = closed or {}
    for c in ("DET", "ADP", "GEN"):
        lexicon[c] = list(closed.get(c) or [fresh() for _ in range(4 if c != "GEN" else 1)])
    return SyntheticLanguage(name, lexicon, head_final)


DEFAULT_SIZES = {"NOUN": 300, "ADJ": 150, "VERB": 200, "ADV": 30}


def default_languages(seed: int = 0, sizes: dict[str, int] | None = None,
                      held_out: str = "ħżġċ", shared_stem_frac: float = 0.5):
    """Two base languages, a held-out-character target, and a fully seen control.

    The control is the head-final base language itself, so its words are
    all covered by the base vocabulary.
    """
    sizes = sizes or DEFAULT_SIZES
    base_a = make_language("base_a", seed + 1, {"NOUN": ["o", "on"], "ADJ": ["i", "ik"], "VERB": ["ar", "at"],
                                                "ADV": ["mente"]}, sizes, head_final=True)
    base_b = make_language("base_b", seed + 2, {"NOUN": ["um", "us"], "ADJ": ["el"], "VERB": ["et", "eft"],
                                                "ADV": ["ly"]}, sizes, head_final=False)
    h = held_out
    target = make_language("target", seed + 3, {"NOUN": [h[0] + "a", h[0] + "u"], "ADJ": [h[1] + "a", h[1] + "u"],
                                                "VERB": [h[2] + "a", h[2] + "u"], "ADV": [h[3] + "a"]},
                           sizes, head_final=True, shared_stem_frac=shared_stem_frac)
    return {"base": [base_a, base_b], "target": target, "control": base_a}
