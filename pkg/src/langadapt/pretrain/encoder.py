"""A compact BERT-style transformer encoder with a masked-LM head."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import torch
import torch.nn.functional as F
from torch import nn

CHECKPOINT_FORMAT = "langadapt-encoder"
CHECKPOINT_VERSION = 1


@dataclass
class EncoderConfig:
    vocab_size: int = 5000
    n_layers: int = 4
    hidden: int = 128
    n_heads: int = 4
    ff_dim: int = 512
    max_positions: int = 128
    dropout: float = 0.1
    layer_norm: bool = True
    tie_mlm_head: bool = True
    init_std: float = 0.02

    def __post_init__(self):
        if self.hidden % self.n_heads:
            raise ValueError(f"hidden size {self.hidden} not divisible by {self.n_heads} heads")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must be a probability")


class PieceEmbedding(nn.Module):
    """Embedding table whose augmented rows can live in a separate parameter.

    Splitting the new rows off lets the optimizer give them their own
    learning rate; the effective table is always ``full_weight()``.
    """

    def __init__(self, vocab_size: int, hidden: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(vocab_size, hidden))
        self.slot_weight: nn.Parameter | None = None
        self.register_buffer("slot_ids", torch.zeros(0, dtype=torch.long))

    def split_rows(self, ids: Sequence[int]) -> None:
        if self.slot_weight is not None:
            self.merge_rows()
        ids = torch.as_tensor(sorted(set(int(i) for i in ids)), dtype=torch.long)
        if len(ids) == 0:
            return
        self.slot_ids = ids
        self.slot_weight = nn.Parameter(self.weight.detach()[ids].clone())

    def merge_rows(self) -> None:
        if self.slot_weight is None:
            return
        with torch.no_grad():
            self.weight[self.slot_ids] = self.slot_weight
        self.slot_weight = None
        self.slot_ids = torch.zeros(0, dtype=torch.long)

    def full_weight(self) -> torch.Tensor:
        if self.slot_weight is None:
            return self.weight
        return self.weight.index_put((self.slot_ids,), self.slot_weight)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return F.embedding(ids, self.full_weight())


def _norm(config: EncoderConfig) -> nn.Module:
    return nn.LayerNorm(config.hidden, eps=1e-12) if config.layer_norm else nn.Identity()


class SelfAttention(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.n_heads = config.n_heads
        self.query = nn.Linear(config.hidden, config.hidden)
        self.key = nn.Linear(config.hidden, config.hidden)
        self.value = nn.Linear(config.hidden, config.hidden)
        self.output = nn.Linear(config.hidden, config.hidden)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        dh = d // self.n_heads

        def heads(h):
            return h.view(b, t, self.n_heads, dh).transpose(1, 2)

        q, k, v = heads(self.query(x)), heads(self.key(x)), heads(self.value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
        scores = scores.masked_fill(pad_mask[:, None, None, :], torch.finfo(scores.dtype).min)
        probs = self.dropout(scores.softmax(-1))
        ctx = (probs @ v).transpose(1, 2).reshape(b, t, d)
        return self.output(ctx)


class EncoderLayer(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.attention = SelfAttention(config)
        self.attn_norm = _norm(config)
        self.ff_in = nn.Linear(config.hidden, config.ff_dim)
        self.ff_out = nn.Linear(config.ff_dim, config.hidden)
        self.ff_norm = _norm(config)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x, pad_mask):
        x = self.attn_norm(x + self.dropout(self.attention(x, pad_mask)))
        h = self.ff_out(F.gelu(self.ff_in(x)))
        return self.ff_norm(x + self.dropout(h))


class EncoderOutput(NamedTuple):
    activations: list[torch.Tensor]  # n_layers + 1 tensors of shape (batch, seq, hidden)
    mlm_logits: torch.Tensor | None  # (n_masked, vocab)


class Encoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.piece_embeddings = PieceEmbedding(config.vocab_size, config.hidden)
        self.position_embeddings = nn.Embedding(config.max_positions, config.hidden)
        self.embed_norm = _norm(config)
        self.embed_dropout = nn.Dropout(config.dropout)
        self.layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.n_layers))
        self.mlm_transform = nn.Linear(config.hidden, config.hidden)
        self.mlm_norm = _norm(config)
        self.mlm_decoder = None if config.tie_mlm_head else nn.Linear(config.hidden, config.vocab_size, bias=False)
        self.mlm_bias = nn.Parameter(torch.zeros(config.vocab_size))
        self.new_slot_ids: list[int] = []
        self.reset_parameters()

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        std = self.config.init_std
        for name, p in self.named_parameters():
            if name.endswith("norm.weight"):
                nn.init.ones_(p)
            elif name.endswith("bias") or p.dim() == 1:
                nn.init.zeros_(p)
            else:
                with torch.no_grad():
                    p.normal_(0.0, std, generator=generator)

    def embed(self, input_ids: torch.Tensor) -> torch.Tensor:
        if input_ids.numel() and int(input_ids.max()) >= self.config.vocab_size:
            raise IndexError(f"piece id {int(input_ids.max())} out of range for vocabulary of "
                             f"{self.config.vocab_size}")
        t = input_ids.shape[1]
        if t > self.config.max_positions:
            raise ValueError(f"sequence length {t} exceeds {self.config.max_positions} positions")
        pos = torch.arange(t, device=input_ids.device)
        x = self.piece_embeddings(input_ids) + self.position_embeddings(pos)[None]
        return self.embed_dropout(self.embed_norm(x))

    def forward(self, input_ids, attention_mask, masked_index=None) -> EncoderOutput:
        """Run the encoder.

        ``masked_index`` is a ``(batch_idx, position)`` pair of 1-d tensors;
        MLM logits are produced only there.
        """
        pad_mask = attention_mask == 0
        x = self.embed(input_ids)
        acts = [x]
        for layer in self.layers:
            x = layer(x, pad_mask)
            acts.append(x)
        logits = None
        if masked_index is not None:
            h = x[masked_index[0], masked_index[1]]
            h = self.mlm_norm(F.gelu(self.mlm_transform(h)))
            if self.mlm_decoder is None:
                logits = h @ self.piece_embeddings.full_weight().t() + self.mlm_bias
            else:
                logits = self.mlm_decoder(h) + self.mlm_bias
        return EncoderOutput(acts, logits)

    def layer_parameters(self) -> dict[int, list[nn.Parameter]]:
        """Parameters grouped by depth: 0 = embeddings, ``1..L`` = transformer layers."""
        groups = {0: [p for m in (self.piece_embeddings, self.position_embeddings, self.embed_norm)
                      for p in m.parameters()]}
        for i, layer in enumerate(self.layers, 1):
            groups[i] = list(layer.parameters())
        return groups

    def merged_state_dict(self) -> dict[str, torch.Tensor]:
        state = {k: v.detach().clone() for k, v in self.state_dict().items()}
        state["piece_embeddings.weight"] = self.piece_embeddings.full_weight().detach().clone()
        state.pop("piece_embeddings.slot_weight", None)
        state["piece_embeddings.slot_ids"] = torch.zeros(0, dtype=torch.long)
        return state

    def load_merged_state_dict(self, state: dict[str, torch.Tensor]) -> None:
        self.piece_embeddings.merge_rows()
        self.load_state_dict(state)


def collate(instances, pad_id: int = 0, device=None) -> dict[str, torch.Tensor]:
    """Pad a list of PretrainingInstances into batch tensors."""
    t = max(len(inst.input_ids) for inst in instances)
    ids = torch.full((len(instances), t), pad_id, dtype=torch.long)
    mask = torch.zeros((len(instances), t), dtype=torch.long)
    rows, cols, labels = [], [], []
    for b, inst in enumerate(instances):
        n = len(inst.input_ids)
        ids[b, :n] = torch.as_tensor(inst.input_ids)
        mask[b, :n] = torch.as_tensor(inst.attention_mask)
        rows.extend([b] * len(inst.masked_positions))
        cols.extend(inst.masked_positions)
        labels.extend(inst.masked_labels)
    return {
        "input_ids": ids,
        "attention_mask": mask,
        "masked_index": (torch.as_tensor(rows, dtype=torch.long), torch.as_tensor(cols, dtype=torch.long)),
        "masked_labels": torch.as_tensor(labels, dtype=torch.long),
    }


def encoder_forward(instances, encoder: Encoder, training: bool = False, seed: int = 0,
                    pad_id: int = 0) -> EncoderOutput:
    batch = collate(instances, pad_id)
    encoder.train(training)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return encoder(batch["input_ids"], batch["attention_mask"], batch["masked_index"])


def mlm_loss(mlm_logits: torch.Tensor, masked_labels: torch.Tensor) -> torch.Tensor:
    if mlm_logits is None or mlm_logits.shape[0] == 0:
        raise ValueError("batch has no masked positions")
    if mlm_logits.shape[0] != masked_labels.shape[0]:
        raise ValueError("logits and labels differ in length")
    return F.cross_entropy(mlm_logits, masked_labels)


def initialize_new_embeddings(encoder: Encoder, new_slot_ids: Sequence[int], seed: int,
                              std: float = 0.02) -> Encoder:
    """Redraw the given embedding rows from N(0, std^2) truncated at two std."""
    ids = sorted(set(int(i) for i in new_slot_ids))
    g = torch.Generator().manual_seed(seed)
    pe = encoder.piece_embeddings
    with torch.no_grad():
        rows = torch.empty(len(ids), encoder.config.hidden, dtype=pe.weight.dtype)
        nn.init.trunc_normal_(rows, 0.0, std, -2 * std, 2 * std, generator=g)
        if pe.slot_weight is not None:
            pe.merge_rows()
        pe.weight[torch.as_tensor(ids, dtype=torch.long)] = rows
    encoder.new_slot_ids = ids
    return encoder


def save_encoder(path: str | Path, encoder: Encoder, vocab_hash: str = "", extra: dict | None = None) -> None:
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(encoder.config),
        "vocab_hash": vocab_hash,
        "new_slot_ids": list(encoder.new_slot_ids),
        "shapes": {k: list(v.shape) for k, v in encoder.merged_state_dict().items()},
        "state": encoder.merged_state_dict(),
        "extra": extra or {},
    }, path)


def load_encoder(path: str | Path, vocab_hash: str | None = None) -> Encoder:
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an encoder checkpoint")
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {ckpt.get('version')}")
    if vocab_hash is not None and ckpt["vocab_hash"] and ckpt["vocab_hash"] != vocab_hash:
        raise ValueError(f"{path}: checkpoint was trained with a different vocabulary")
    enc = Encoder(EncoderConfig(**ckpt["config"]))
    enc.load_merged_state_dict(ckpt["state"])
    enc.new_slot_ids = list(ckpt.get("new_slot_ids", []))
    return enc
