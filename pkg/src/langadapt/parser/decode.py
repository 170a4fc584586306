"""Tree decoding from arc scores: greedy fast path, single-root Chu-Liu/Edmonds fallback."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..treebank import DependencyTree, tree_problems


def _find_cycle(heads: np.ndarray) -> list[int] | None:
    n = len(heads)
    color = np.zeros(n, dtype=np.int8)  # 0 new, 1 on current path, 2 done
    color[0] = 2
    for start in range(1, n):
        path = []
        v = start
        while color[v] == 0:
            color[v] = 1
            path.append(v)
            v = heads[v]
        if color[v] == 1:
            return path[path.index(v):]
        for u in path:
            color[u] = 2
    return None


def _chu_liu_edmonds(scores: np.ndarray) -> np.ndarray:
    """Maximum arborescence rooted at node 0; ``scores[h, d]`` scores arc h -> d."""
    n = scores.shape[0]
    s = scores.copy()
    np.fill_diagonal(s, -np.inf)
    s[:, 0] = -np.inf
    heads = s.argmax(0)
    heads[0] = 0
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads

    in_cycle = np.zeros(n, dtype=bool)
    in_cycle[cycle] = True
    cyc = np.asarray(cycle)
    rest = np.flatnonzero(~in_cycle)  # includes the root
    c = len(rest)  # index of the contracted node in the reduced graph
    m = c + 1
    sub = np.full((m, m), -np.inf)
    sub[:c, :c] = s[np.ix_(rest, rest)]

    # arcs entering the cycle: gain of breaking the cycle at v
    enter = s[np.ix_(rest, cyc)] - s[heads[cyc], cyc][None, :]
    enter_best = enter.argmax(1)
    sub[:c, c] = enter[np.arange(c), enter_best]
    # arcs leaving the cycle
    leave = s[np.ix_(cyc, rest)]
    leave_best = leave.argmax(0)
    sub[c, :c] = leave[leave_best, np.arange(c)]

    sub_heads = _chu_liu_edmonds(sub)

    out = heads.copy()
    for k, node in enumerate(rest):
        if k == 0 and node == 0:
            continue
        h = sub_heads[k]
        out[node] = cyc[leave_best[k]] if h == c else rest[h]
    u = sub_heads[c]
    v = cyc[enter_best[u]]
    out[v] = rest[u]
    return out


def mst_heads(arc_scores: np.ndarray) -> list[int]:
    """Single-root maximum spanning tree for an ``n x (n+1)`` dependent-by-head matrix."""
    arc_scores = np.asarray(arc_scores, dtype=np.float64)
    n = arc_scores.shape[0]
    full = np.full((n + 1, n + 1), -np.inf)
    full[:, 1:] = arc_scores.T
    finite = arc_scores[np.isfinite(arc_scores)]
    spread = float(finite.max() - finite.min()) if finite.size else 0.0
    # Any tree with k root arcs pays k * penalty, so every extra root arc
    # costs more than the whole score range.
    penalty = (n + 1) * spread + 1.0
    full[0, 1:] -= penalty
    heads = _chu_liu_edmonds(full)
    return [int(h) for h in heads[1:]]


def greedy_heads(arc_scores: np.ndarray) -> list[int]:
    s = np.array(arc_scores, dtype=np.float64)
    n = s.shape[0]
    s[np.arange(n), np.arange(1, n + 1)] = -np.inf
    return [int(h) for h in s.argmax(1)]


def decode_heads(arc_scores: np.ndarray) -> list[int]:
    heads = greedy_heads(arc_scores)
    if not tree_problems(heads, single_root=True):
        return heads
    return mst_heads(arc_scores)


def tree_score(arc_scores: np.ndarray, heads: Sequence[int]) -> float:
    return float(sum(arc_scores[i, h] for i, h in enumerate(heads)))


def decode_tree(arc_scores, label_scores=None, label_names: Sequence[str] | None = None) -> DependencyTree:
    """Best single-root tree plus the top label on each chosen arc.

    ``label_scores`` has shape ``(n, n+1, R)`` (or ``(n, R)`` if already
    evaluated at the chosen arcs).
    """
    arc_scores = np.asarray(arc_scores, dtype=np.float64)
    n = arc_scores.shape[0]
    if n < 1:
        raise ValueError("cannot decode an empty sentence")
    heads = decode_heads(arc_scores)
    if label_scores is None:
        labels = ["_"] * n
    else:
        ls = np.asarray(label_scores)
        at_arcs = ls[np.arange(n), heads] if ls.ndim == 3 else ls
        ids = at_arcs.argmax(-1)
        labels = [label_names[i] if label_names is not None else str(int(i)) for i in ids]
    return DependencyTree(tuple(heads), tuple(labels))
