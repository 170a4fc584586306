"""Parser training with early stopping, gradual unfreezing and discriminative rates."""

from __future__ import annotations

import copy
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..mix import encode_words
from ..pretrain.encoder import Encoder, EncoderConfig
from ..runconfig import RunConfig
from ..treebank import DependencyTree, ScoreReport, TreebankSentence, score
from ..wordpiece import Vocabulary
from .decode import decode_tree
from .model import BiaffineScorer, ParserConfig, parser_loss
from .schedule import lr_schedule, unfreezing_plan

logger = logging.getLogger(__name__)

PARSER_FORMAT = "langadapt-parser"
PARSER_VERSION = 1


@dataclass
class _Item:
    ids: list[int]
    first: list[int]
    heads: list[int] | None = None
    labels: list[int] | None = None
    cached: torch.Tensor | None = None  # (L+1, n, d) frozen activations


class DependencyParser:
    """Encoder + scalar mix + biaffine scorer, with label inventory."""

    def __init__(self, encoder: Encoder, vocab: Vocabulary, scorer: BiaffineScorer,
                 label_names: Sequence[str], config: ParserConfig):
        self.encoder = encoder
        self.vocab = vocab
        self.scorer = scorer
        self.label_names = list(label_names)
        self.label_index = {l: i for i, l in enumerate(self.label_names)}
        self.config = config

    @property
    def ft(self) -> bool:
        return self.config.mode == "ft"

    def items(self, sentences: Sequence[TreebankSentence], with_gold: bool = True) -> list[_Item]:
        out = []
        for s in sentences:
            ids, first = encode_words(s.tokens, self.vocab, self.encoder.config.max_positions)
            item = _Item(ids, first)
            if with_gold:
                item.heads = list(s.gold.heads)
                item.labels = [self.label_index.get(l, 0) for l in s.gold.labels]
            out.append(item)
        if not self.ft:
            self._cache(out)
        return out

    @torch.no_grad()
    def _cache(self, items: list[_Item], chunk: int = 64) -> None:
        self.encoder.eval()
        for k in range(0, len(items), chunk):
            part = items[k:k + chunk]
            layers, _ = self._run_encoder(part)
            for b, it in enumerate(part):
                it.cached = torch.stack([a[b, :len(it.first)] for a in layers])

    def _run_encoder(self, items: list[_Item]):
        b = len(items)
        t = max(len(it.ids) for it in items)
        n = max(len(it.first) for it in items)
        ids = torch.full((b, t), self.vocab.pad_id, dtype=torch.long)
        mask = torch.zeros((b, t), dtype=torch.long)
        first = torch.zeros((b, n), dtype=torch.long)
        for i, it in enumerate(items):
            ids[i, :len(it.ids)] = torch.as_tensor(it.ids)
            mask[i, :len(it.ids)] = 1
            first[i, :len(it.first)] = torch.as_tensor(it.first)
        acts = self.encoder(ids, mask).activations
        idx = first.unsqueeze(-1).expand(-1, -1, acts[0].shape[-1])
        lengths = torch.as_tensor([len(it.first) for it in items])
        return [a.gather(1, idx) for a in acts], lengths

    def layer_words(self, items: list[_Item]):
        if self.ft:
            return self._run_encoder(items)
        n = max(len(it.first) for it in items)
        n_layers, _, d = items[0].cached.shape
        out = torch.zeros(n_layers, len(items), n, d, dtype=items[0].cached.dtype)
        for i, it in enumerate(items):
            out[:, i, :it.cached.shape[1]] = it.cached
        return list(out), torch.as_tensor([len(it.first) for it in items])

    def train_mode(self, training: bool) -> None:
        self.scorer.train(training)
        self.encoder.train(training and self.ft)

    def loss(self, items: list[_Item]) -> torch.Tensor:
        layers, lengths = self.layer_words(items)
        arc, lh, ld = self.scorer(layers, lengths)
        n = arc.shape[1]
        heads = torch.zeros((len(items), n), dtype=torch.long)
        labels = torch.zeros((len(items), n), dtype=torch.long)
        for i, it in enumerate(items):
            heads[i, :len(it.heads)] = torch.as_tensor(it.heads)
            labels[i, :len(it.labels)] = torch.as_tensor(it.labels)
        label_logits = self.scorer.label_logits_at(lh, ld, heads)
        return parser_loss(arc, label_logits, heads, labels, lengths)

    @torch.no_grad()
    def predict_items(self, items: list[_Item], batch_size: int = 32) -> list[DependencyTree]:
        self.train_mode(False)
        trees = []
        for k in range(0, len(items), batch_size):
            part = items[k:k + batch_size]
            layers, lengths = self.layer_words(part)
            arc, lh, ld = self.scorer(layers, lengths)
            lab = self.scorer.label.all_pairs(ld, lh)
            for i, n in enumerate(lengths.tolist()):
                trees.append(decode_tree(arc[i, :n, :n + 1].double().numpy(),
                                         lab[i, :n, :n + 1].numpy(), self.label_names))
        return trees

    def predict(self, sentences: Sequence[TreebankSentence]) -> list[DependencyTree]:
        return self.predict_items(self.items(sentences, with_gold=False))

    def evaluate(self, sentences: Sequence[TreebankSentence], items=None) -> ScoreReport:
        items = items if items is not None else self.items(sentences, with_gold=False)
        return score(self.predict_items(items), [s.gold for s in sentences])

    def state(self) -> dict:
        state = {"scorer": {k: v.detach().clone() for k, v in self.scorer.state_dict().items()}}
        if self.ft:
            state["encoder"] = self.encoder.merged_state_dict()
        return state

    def load_state(self, state: dict) -> None:
        self.scorer.load_state_dict(state["scorer"])
        if "encoder" in state:
            self.encoder.load_merged_state_dict(state["encoder"])

    def save(self, path: str | Path) -> None:
        torch.save({
            "format": PARSER_FORMAT,
            "version": PARSER_VERSION,
            "config": asdict(self.config),
            "encoder_config": asdict(self.encoder.config),
            "vocab_hash": self.vocab.fingerprint(),
            "vocab": list(self.vocab.pieces),
            "labels": self.label_names,
            "scorer": self.scorer.state_dict(),
            "scalar_mix": {"scalars": self.scorer.mix.scalars.detach().tolist(),
                           "gamma": self.scorer.mix.gamma.item()},
            "encoder": self.encoder.merged_state_dict(),
        }, path)

    @classmethod
    def load(cls, path: str | Path) -> "DependencyParser":
        ckpt = torch.load(path, map_location="cpu", weights_only=False)
        if ckpt.get("format") != PARSER_FORMAT or ckpt.get("version") != PARSER_VERSION:
            raise ValueError(f"{path}: not a supported parser checkpoint")
        vocab = Vocabulary(ckpt["vocab"], slot_ids=range(1, 100))
        if vocab.fingerprint() != ckpt["vocab_hash"]:
            raise ValueError(f"{path}: vocabulary hash mismatch")
        enc = Encoder(EncoderConfig(**ckpt["encoder_config"]))
        enc.load_merged_state_dict(ckpt["encoder"])
        config = ParserConfig(**ckpt["config"])
        scorer = BiaffineScorer(enc.config.hidden, enc.config.n_layers + 1, len(ckpt["labels"]), config)
        scorer.load_state_dict(ckpt["scorer"])
        return cls(enc, vocab, scorer, ckpt["labels"], config)


@dataclass
class ParserTrainResult:
    parser: DependencyParser
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_las: float = float("-inf")


def _set_trainable(encoder: Encoder, plan: dict[int, float]) -> None:
    for depth, params in encoder.layer_parameters().items():
        for p in params:
            p.requires_grad_(depth in plan)


def train_parser(encoder: Encoder, vocab: Vocabulary, treebank_train: Sequence[TreebankSentence],
                 treebank_valid: Sequence[TreebankSentence], config: ParserConfig,
                 run: RunConfig = RunConfig(), label_names: Sequence[str] | None = None) -> ParserTrainResult:
    """Train a biaffine parser and return the best-validation-LAS state.

    Frozen mode never touches ``encoder``.  In ft mode a copy of it is
    finetuned and lives on in the returned parser.
    """
    if not treebank_train or not treebank_valid:
        raise ValueError("training and validation treebanks must be non-empty")
    random.seed(run.env_seed)
    rng = np.random.default_rng(run.numeric_seed)
    torch.manual_seed(run.model_seed)

    ft = config.mode == "ft"
    enc = copy.deepcopy(encoder) if ft else encoder
    if ft:
        enc.piece_embeddings.merge_rows()
    frozen_before = None if ft else {k: v.clone() for k, v in enc.state_dict().items()}
    flags = [(p, p.requires_grad) for p in enc.parameters()]
    for p in enc.parameters():
        p.requires_grad_(False)

    if label_names is None:
        label_names = sorted({l for s in treebank_train for l in s.gold.labels})
    scorer = BiaffineScorer(enc.config.hidden, enc.config.n_layers + 1, len(label_names), config)
    parser = DependencyParser(enc, vocab, scorer, label_names, config)
    train_items = parser.items(treebank_train)
    valid_items = parser.items(treebank_valid, with_gold=False)

    groups = [{"params": list(scorer.parameters()), "lr": 0.0, "peak": config.parser_lr, "depth": None}]
    if ft:
        for depth, params in sorted(enc.layer_parameters().items()):
            groups.append({"params": params, "lr": 0.0, "peak": config.encoder_lr, "depth": depth})
    opt = torch.optim.Adam(groups, betas=(run.adam_beta1, run.adam_beta2))
    trainable = [p for g in groups for p in g["params"]]

    steps_per_epoch = math.ceil(len(train_items) / config.batch_size)
    warmup = max(1, steps_per_epoch * config.warmup_epochs)
    result = ParserTrainResult(parser)
    best_state = parser.state()
    stale = 0
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        plan = unfreezing_plan(epoch, enc.config.n_layers, config.mode, config.unfreeze_decay)
        if ft:
            _set_trainable(enc, plan)
        parser.train_mode(True)
        order = rng.permutation(len(train_items))
        total = 0.0
        for b in range(steps_per_epoch):
            step += 1
            for g in groups:
                mult = 1.0 if g["depth"] is None else plan.get(g["depth"], 0.0)
                g["lr"] = lr_schedule(step, None, warmup, g["peak"]) * mult
            batch = [train_items[i] for i in order[b * config.batch_size:(b + 1) * config.batch_size]]
            loss = parser.loss(batch)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite parser loss at epoch {epoch}, step {step}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_([p for p in trainable if p.grad is not None], run.grad_norm_clip)
            opt.step()
            total += loss.item()
        report = parser.evaluate(treebank_valid, valid_items)
        result.log.append({"epoch": epoch, "train_loss": total / steps_per_epoch,
                           "valid_uas": report.uas, "valid_las": report.las})
        logger.debug("epoch %d loss %.4f valid LAS %.2f", epoch, total / steps_per_epoch, report.las)
        if report.las > result.best_valid_las:
            result.best_valid_las = report.las
            result.best_epoch = epoch
            best_state = parser.state()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    parser.load_state(best_state)
    parser.train_mode(False)
    if ft:
        for p in enc.parameters():
            p.requires_grad_(False)
    else:
        for p, flag in flags:
            p.requires_grad_(flag)
    if frozen_before is not None:
        after = enc.state_dict()
        assert all(torch.equal(frozen_before[k], after[k]) for k in frozen_before), "frozen encoder changed"
    return result
