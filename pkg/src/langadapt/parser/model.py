"""Biaffine graph-based dependency parser over scalar-mixed encoder layers."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..mix import ScalarMix


@dataclass
class ParserConfig:
    arc_dim: int = 100
    label_dim: int = 100
    bilstm_layers: int = 3
    bilstm_hidden: int = 400
    bilstm_hidden_per_direction: bool = True
    input_dropout: float = 0.3
    parser_dropout: float = 0.3
    layer_dropout: float = 0.1
    parser_lr: float = 1e-3
    encoder_lr: float = 5e-5
    warmup_epochs: int = 1
    max_epochs: int = 200
    patience: int = 20
    batch_size: int = 8
    mode: str = "frozen"
    unfreeze_decay: float = 0.9

    def __post_init__(self):
        if self.mode not in ("frozen", "ft"):
            raise ValueError(f"mode must be 'frozen' or 'ft', got {self.mode!r}")
        for name in ("input_dropout", "parser_dropout", "layer_dropout"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if min(self.arc_dim, self.label_dim, self.bilstm_hidden, self.bilstm_layers) <= 0:
            raise ValueError("parser dimensions must be positive")

    @property
    def lstm_hidden_per_direction(self) -> int:
        return self.bilstm_hidden if self.bilstm_hidden_per_direction else self.bilstm_hidden // 2


class BiLSTM(nn.Module):
    def __init__(self, input_dim: int, config: ParserConfig):
        super().__init__()
        h = config.lstm_hidden_per_direction
        self.input_dropout = nn.Dropout(config.input_dropout)
        self.lstm = nn.LSTM(input_dim, h, num_layers=config.bilstm_layers, bidirectional=True,
                            batch_first=True, dropout=config.parser_dropout if config.bilstm_layers > 1 else 0.0)
        self.output_dim = 2 * h

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if x.shape[1] == 0:
            raise ValueError("empty sentence")
        x = self.input_dropout(x)
        packed = nn.utils.rnn.pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.lstm(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        return out


def bilstm_encode(word_vectors: torch.Tensor, bilstm: BiLSTM) -> torch.Tensor:
    """Contextualize one sentence ``(n, d)`` -> ``(n, 2h)``."""
    if word_vectors.shape[0] == 0:
        raise ValueError("empty sentence")
    lengths = torch.tensor([word_vectors.shape[0]])
    return bilstm(word_vectors[None], lengths)[0]


class Projection(nn.Module):
    def __init__(self, in_dim: int, out_dim: int, dropout: float):
        super().__init__()
        self.linear = nn.Linear(in_dim, out_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.dropout(F.elu(self.linear(x)))


class BiaffineArc(nn.Module):
    """``S[i, j] = dep_i^T U head_j + u^T head_j``."""

    def __init__(self, dim: int):
        super().__init__()
        self.U = nn.Parameter(torch.zeros(dim, dim))
        self.u = nn.Parameter(torch.zeros(dim))

    def forward(self, dep: torch.Tensor, head: torch.Tensor) -> torch.Tensor:
        # dep (..., n, k), head (..., n+1, k) -> (..., n, n+1)
        return dep @ self.U @ head.transpose(-1, -2) + (head @ self.u).unsqueeze(-2)


class BiaffineLabel(nn.Module):
    """``logit_r = dep^T U_r head + v_r^T [dep; head] + b_r``."""

    def __init__(self, dim: int, n_labels: int):
        super().__init__()
        self.U = nn.Parameter(torch.zeros(n_labels, dim, dim))
        self.V = nn.Parameter(torch.zeros(n_labels, 2 * dim))
        self.b = nn.Parameter(torch.zeros(n_labels))

    def forward(self, dep: torch.Tensor, head: torch.Tensor) -> torch.Tensor:
        """Pairwise ``dep (..., k)`` with ``head (..., k)`` of equal leading shape -> ``(..., R)``."""
        bil = torch.einsum("...i,rij,...j->...r", dep, self.U, head)
        lin = torch.cat([dep, head], -1) @ self.V.t()
        return bil + lin + self.b

    def all_pairs(self, dep: torch.Tensor, head: torch.Tensor) -> torch.Tensor:
        """``dep (B, n, k)``, ``head (B, m, k)`` -> ``(B, n, m, R)``."""
        bil = torch.einsum("bni,rij,bmj->bnmr", dep, self.U, head)
        k = dep.shape[-1]
        lin = (dep @ self.V[:, :k].t()).unsqueeze(2) + (head @ self.V[:, k:].t()).unsqueeze(1)
        return bil + lin + self.b


def biaffine_arc_scores(h_arc_dep, h_arc_head, U, u):
    return h_arc_dep @ U @ h_arc_head.transpose(-1, -2) + (h_arc_head @ u).unsqueeze(-2)


class BiaffineScorer(nn.Module):
    """Everything between word vectors and arc/label scores.

    In ``frozen`` mode the word vectors go through a BiLSTM first; in
    ``ft`` mode the projections read the encoder output directly.
    """

    def __init__(self, input_dim: int, n_layers: int, n_labels: int, config: ParserConfig):
        super().__init__()
        self.config = config
        self.mix = ScalarMix(n_layers, config.layer_dropout)
        self.root = nn.Parameter(torch.empty(input_dim).normal_(0.0, 0.02))
        if config.mode == "frozen":
            self.bilstm = BiLSTM(input_dim, config)
            feat = self.bilstm.output_dim
        else:
            self.bilstm = None
            self.input_dropout = nn.Dropout(config.input_dropout)
            feat = input_dim
        p = config.parser_dropout
        self.arc_head = Projection(feat, config.arc_dim, p)
        self.arc_dep = Projection(feat, config.arc_dim, p)
        self.lab_head = Projection(feat, config.label_dim, p)
        self.lab_dep = Projection(feat, config.label_dim, p)
        self.arc = BiaffineArc(config.arc_dim)
        self.label = BiaffineLabel(config.label_dim, n_labels)
        nn.init.xavier_uniform_(self.arc.U)
        nn.init.xavier_uniform_(self.label.U)

    def project_heads_deps(self, words: torch.Tensor, lengths: torch.Tensor):
        """``words (B, n, d)`` -> head-role ``(B, n+1, k)`` and dependent-role ``(B, n, k)`` projections."""
        b = words.shape[0]
        x = torch.cat([self.root.expand(b, 1, -1).to(words.dtype), words], 1)
        if self.bilstm is not None:
            x = self.bilstm(x, lengths + 1)
        else:
            x = self.input_dropout(x)
        return self.arc_head(x), self.arc_dep(x[:, 1:]), self.lab_head(x), self.lab_dep(x[:, 1:])

    def forward(self, layer_words, lengths: torch.Tensor, generator: torch.Generator | None = None):
        """``layer_words``: list of ``(B, n, d)`` per encoder layer.

        Returns arc scores ``(B, n, n+1)`` and the two label projections.
        """
        words = self.mix(layer_words, generator=generator)
        ah, ad, lh, ld = self.project_heads_deps(words, lengths)
        return self.arc(ad, ah), lh, ld

    def label_logits_at(self, lab_head, lab_dep, heads: torch.Tensor) -> torch.Tensor:
        """Label logits for the arc ``heads[b, i] -> i``: ``(B, n, R)``."""
        idx = heads.clamp(min=0).unsqueeze(-1).expand(-1, -1, lab_head.shape[-1])
        chosen = lab_head.gather(1, idx)
        return self.label(lab_dep, chosen)


def parser_loss(arc_scores: torch.Tensor, label_logits: torch.Tensor, gold_heads: torch.Tensor,
                gold_labels: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
    """Mean head cross-entropy plus mean label cross-entropy over real tokens.

    ``arc_scores (B, n, n+1)``, ``label_logits (B, n, R)`` at gold arcs.
    """
    if arc_scores.dim() == 2:
        arc_scores, label_logits = arc_scores[None], label_logits[None]
        gold_heads, gold_labels = gold_heads[None], gold_labels[None]
    b, n, _ = arc_scores.shape
    if lengths is None:
        lengths = torch.full((b,), n, dtype=torch.long)
    tok = torch.arange(n)[None, :] < lengths[:, None]
    cand = torch.arange(n + 1)[None, :] <= lengths[:, None]
    masked = arc_scores.masked_fill(~cand[:, None, :], float("-inf"))
    arc_ce = F.cross_entropy(masked[tok], gold_heads[tok])
    lab_ce = F.cross_entropy(label_logits[tok], gold_labels[tok])
    return arc_ce + lab_ce
