"""Word representations from encoder layers: scalar mix, pooling, frozen/ft modes."""

from __future__ import annotations

import enum
from typing import Sequence

import torch
from torch import nn

from .wordpiece import Vocabulary, tokenize_sentence


class RepresentationMode(str, enum.Enum):
    FROZEN = "frozen"
    FT = "ft"


class ScalarMix(nn.Module):
    """``gamma * sum_j softmax(s)_j * layer_j`` with layer dropout during training.

    A dropped layer is left out of the softmax so the weights stay a
    distribution over the retained layers.
    """

    def __init__(self, n_layers: int, layer_dropout: float = 0.1):
        super().__init__()
        self.scalars = nn.Parameter(torch.zeros(n_layers))
        self.gamma = nn.Parameter(torch.ones(()))
        self.layer_dropout = layer_dropout

    def draw_keep(self, generator: torch.Generator | None = None) -> torch.Tensor:
        n = self.scalars.shape[0]
        while True:
            keep = torch.rand(n, generator=generator) >= self.layer_dropout
            if keep.any():
                return keep

    def weights(self, keep: torch.Tensor | None = None) -> torch.Tensor:
        s = self.scalars
        if keep is not None:
            s = s.masked_fill(~keep.to(s.device), float("-inf"))
        return s.softmax(0)

    def forward(self, activations: Sequence[torch.Tensor], generator: torch.Generator | None = None):
        if len(activations) != self.scalars.shape[0]:
            raise ValueError(f"expected {self.scalars.shape[0]} layers, got {len(activations)}")
        shape = activations[0].shape
        if any(a.shape != shape for a in activations):
            raise ValueError("all layers must share one shape")
        keep = self.draw_keep(generator) if self.training and self.layer_dropout > 0 else None
        w = self.weights(keep)
        stacked = torch.stack(list(activations), 0)
        return self.gamma * torch.tensordot(w.to(stacked.dtype), stacked, dims=1)


def scalar_mix(activations, params: ScalarMix, training: bool = False, seed: int | None = None):
    params.train(training)
    g = torch.Generator().manual_seed(seed) if seed is not None else None
    return params(activations, generator=g)


def pool_to_words(piece_vectors: torch.Tensor, word_alignment: Sequence[tuple[int, int]], offset: int = 0):
    """First-piece pooling.  ``piece_vectors`` is ``(seq, d)``; spans index pieces after ``offset``."""
    starts = []
    for start, length in word_alignment:
        if length <= 0:
            raise ValueError("empty word span")
        starts.append(start + offset)
    return piece_vectors[torch.as_tensor(starts, dtype=torch.long)]


def encode_words(tokens: Sequence[str], vocab: Vocabulary, max_positions: int = 128):
    """``[CLS] pieces [SEP]`` ids plus each word's first-piece position."""
    pieces, spans = tokenize_sentence(tokens, vocab)
    ids = [vocab.cls_id] + pieces + [vocab.sep_id]
    if len(ids) > max_positions:
        raise ValueError(f"sentence needs {len(ids)} positions, encoder has {max_positions}")
    return ids, [s + 1 for s, _ in spans]


def embed_sentence(tokens, vocab: Vocabulary, encoder, mix: ScalarMix, mode="frozen",
                   training: bool = False, seed: int | None = None) -> torch.Tensor:
    """Word vectors for one sentence; gradients reach the encoder only in ``ft`` mode."""
    if not tokens:
        raise ValueError("empty sentence")
    mode = RepresentationMode(mode)
    ids, first = encode_words(tokens, vocab, encoder.config.max_positions)
    ids_t = torch.as_tensor([ids])
    mask = torch.ones_like(ids_t)
    if mode is RepresentationMode.FROZEN:
        encoder.eval()
        with torch.no_grad():
            acts = [a.detach() for a in encoder(ids_t, mask).activations]
    else:
        encoder.train(training)
        acts = encoder(ids_t, mask).activations
    mixed = scalar_mix([a[0] for a in acts], mix, training, seed)
    return mixed[torch.as_tensor(first)]
