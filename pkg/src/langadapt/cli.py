"""Command-line entry point: ``langadapt <group> <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from .augment import augment_vocabulary
from .corpus import compute_corpus_stats, prepare_corpus, read_forum_corpus, read_sentence_file, read_wiki_dump, \
    write_sentence_file
from .experiment import format_summary, report_from_runs, run_pipeline
from .parser import DependencyParser, ParserConfig, train_parser
from .pretrain import (
    Encoder,
    EncoderConfig,
    MaskingConfig,
    PretrainConfig,
    build_instances,
    initialize_new_embeddings,
    load_encoder,
    read_shard,
    save_encoder,
    train_mlm,
    write_shard,
)
from .runconfig import sample_run_configs
from .treebank import read_conllu, score, split_treebank, write_conllu
from .wordpiece import Vocabulary, train_vocabulary

logger = logging.getLogger("langadapt")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# corpus

def cmd_corpus_clean(args) -> None:
    eval_sents = set()
    for p in args.eval_sets or []:
        eval_sents |= {tuple(s.tokens) for s in read_conllu(p)}
    docs = []
    for p in args.inputs:
        docs += read_wiki_dump(p) if args.format == "wiki" else read_forum_corpus(p)
    kept = prepare_corpus(docs, eval_sents, args.format, args.sample_fraction, args.seed, args.min_len, args.max_len)
    write_sentence_file(args.out, kept)
    print(f"wrote {len(kept)} sentences to {args.out}")


# vocab

def cmd_vocab_train(args) -> None:
    vocab = train_vocabulary(read_sentence_file(args.corpus), args.size)
    vocab.save(args.out)
    print(f"wrote {len(vocab)} pieces to {args.out}")


def cmd_vocab_stats(args) -> None:
    stats = compute_corpus_stats(read_sentence_file(args.corpus), Vocabulary.load(args.vocab))
    _dump(vars(stats), None)


def cmd_vocab_augment(args) -> None:
    corpus = read_sentence_file(args.corpus)
    aug, report = augment_vocabulary(corpus, Vocabulary.load(args.orig), args.new_size, args.slots, args.weighting)
    aug.save(args.out)
    _dump(report.to_dict(), args.report)
    print(f"filled {len(report.pieces_added)} slots; unknowns {report.unk_before} -> {report.unk_after}")


# pretrain

def cmd_pretrain_make_shards(args) -> None:
    vocab = Vocabulary.load(args.vocab)
    cfg = MaskingConfig(max_seq=args.max_seq, dup_factor=args.dup_factor)
    instances = build_instances(read_sentence_file(args.corpus), vocab, cfg, seed=args.seed)
    write_shard(args.out, instances, vocab.fingerprint())
    print(f"wrote {len(instances)} instances to {args.out}")


def cmd_pretrain_run(args) -> None:
    vocab = Vocabulary.load(args.vocab)
    torch.manual_seed(args.seed)
    if args.mode == "base":
        enc = Encoder(EncoderConfig(vocab_size=len(vocab), n_layers=args.layers, hidden=args.hidden,
                                    n_heads=args.heads, ff_dim=args.ff))
    else:
        if not args.encoder:
            parser_error(f"--encoder is required for mode {args.mode}")
        # an augmented vocabulary has a different hash from the one the encoder saw
        enc = load_encoder(args.encoder, vocab.fingerprint() if args.mode == "lapt" else None)
        if args.mode in ("va", "tva"):
            initialize_new_embeddings(enc, vocab.filled_slot_ids, args.seed)
    instances = [i for p in args.shards for i in read_shard(p)]
    cfg = PretrainConfig(lr=args.lr, tiered_lr=args.tiered_lr, warmup_steps=args.warmup, batch_size=args.batch,
                         epochs_grid=args.epochs_grid, seed=args.seed)
    result = train_mlm(enc, instances, cfg, mode=args.mode, pad_id=vocab.pad_id)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for epoch, state in result.checkpoints.items():
        enc.load_merged_state_dict(state)
        save_encoder(out / f"encoder_e{epoch}.pt", enc, vocab.fingerprint(),
                     {"mode": args.mode, "epoch": epoch, "loss": result.epoch_losses[epoch]})
    _dump({str(k): v for k, v in result.epoch_losses.items()}, str(out / "losses.json"))
    print(f"saved {len(result.checkpoints)} checkpoints to {out}")


# parse

def cmd_parse_train(args) -> None:
    vocab = Vocabulary.load(args.vocab)
    enc = load_encoder(args.encoder, vocab.fingerprint())
    tb = Path(args.treebank)
    train, valid = read_conllu(tb / "train.conllu"), read_conllu(tb / "valid.conllu")
    labels = sorted({l for s in train + valid for l in s.gold.labels})
    cfg = ParserConfig(mode=args.mode, bilstm_layers=args.bilstm_layers, bilstm_hidden=args.bilstm_hidden,
                       max_epochs=args.max_epochs, patience=args.patience, batch_size=args.batch)
    run = sample_run_configs(n=1, master_seed=args.seed)[0]
    res = train_parser(enc, vocab, train, valid, cfg, run, labels)
    res.parser.save(args.out)
    print(f"best epoch {res.best_epoch}: valid LAS {res.best_valid_las:.2f}; saved {args.out}")


def cmd_parse_predict(args) -> None:
    parser = DependencyParser.load(args.model)
    sents = read_conllu(args.input)
    write_conllu(args.out, sents, parser.predict(sents))
    print(f"parsed {len(sents)} sentences into {args.out}")


# eval / treebank

def cmd_eval_score(args) -> None:
    gold, pred = read_conllu(args.gold), read_conllu(args.pred)
    if [s.tokens for s in gold] != [s.tokens for s in pred]:
        parser_error("gold and predicted files hold different sentences")
    r = score([s.gold for s in pred], [s.gold for s in gold], include_punct=not args.no_punct)
    print(f"UAS {r.uas:.2f}  LAS {r.las:.2f}  tokens {r.n_tokens}")


def cmd_treebank_split(args) -> None:
    parts = split_treebank(read_conllu(args.input), args.ratios, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "valid", "test"), parts):
        write_conllu(out / f"{name}.conllu", part)
    print("sizes: " + " ".join(f"{n}={len(p)}" for n, p in zip(("train", "valid", "test"), parts)))


# experiment

def cmd_experiment_run(args) -> None:
    res = run_pipeline(args.manifest, args.out)
    print(res.table)
    print(format_summary(res.summary, res.control))


def cmd_experiment_report(args) -> None:
    _, table = report_from_runs(args.dir)
    print(table)


def parser_error(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="langadapt")
    ap.add_argument("-v", "--verbose", action="store_true")
    groups = ap.add_subparsers(dest="group", required=True)

    g = groups.add_parser("corpus").add_subparsers(dest="command", required=True)
    p = g.add_parser("clean")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=["wiki", "forum"], default="wiki")
    p.add_argument("--eval-sets", nargs="*", default=[])
    p.add_argument("--sample-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corpus_clean)

    g = groups.add_parser("vocab").add_subparsers(dest="command", required=True)
    p = g.add_parser("train")
    p.add_argument("--corpus", required=True)
    p.add_argument("--size", type=int, default=5000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vocab_train)
    p = g.add_parser("stats")
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_vocab_stats)
    p = g.add_parser("augment")
    p.add_argument("--orig", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--new-size", type=int, default=5000)
    p.add_argument("--slots", type=int, default=99)
    p.add_argument("--weighting", choices=["token", "type"], default="token")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_vocab_augment)

    g = groups.add_parser("pretrain").add_subparsers(dest="command", required=True)
    p = g.add_parser("make-shards")
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-seq", type=int, default=128)
    p.add_argument("--dup-factor", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain_make_shards)
    p = g.add_parser("run")
    p.add_argument("--mode", choices=["base", "lapt", "va", "tva"], required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--encoder", help="starting checkpoint (all modes but base)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs-grid", type=_ints, default=(1, 5, 10, 15, 20))
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--tiered-lr", type=float, default=1e-4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--batch", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--ff", type=int, default=512)
    p.set_defaults(func=cmd_pretrain_run)

    g = groups.add_parser("parse").add_subparsers(dest="command", required=True)
    p = g.add_parser("train")
    p.add_argument("--mode", choices=["frozen", "ft"], default="frozen")
    p.add_argument("--encoder", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--treebank", required=True, help="directory with train/valid .conllu files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bilstm-layers", type=int, default=3)
    p.add_argument("--bilstm-hidden", type=int, default=400)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse_train)
    p = g.add_parser("predict")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse_predict)

    g = groups.add_parser("eval").add_subparsers(dest="command", required=True)
    p = g.add_parser("score")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--no-punct", action="store_true")
    p.set_defaults(func=cmd_eval_score)

    g = groups.add_parser("treebank").add_subparsers(dest="command", required=True)
    p = g.add_parser("split")
    p.add_argument("input")
    p.add_argument("--ratios", type=_floats, default=(0.8, 0.1, 0.1))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_treebank_split)

    g = groups.add_parser("experiment").add_subparsers(dest="command", required=True)
    p = g.add_parser("run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="experiment_out")
    p.set_defaults(func=cmd_experiment_run)
    p = g.add_parser("report")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_experiment_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
