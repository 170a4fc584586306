"""End-to-end orchestration: data, vocabularies, pretraining, parsing, reporting.

Every stage writes into ``<out>/cache/<stage>-<key>/`` where ``key`` hashes
the stage parameters together with the keys of its inputs.  A directory
holding ``done.json`` is reused as is, so a rerun of an unchanged manifest
recomputes nothing and an extended epoch grid only adds the new points.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np
import torch
import yaml

from ..augment import augment_vocabulary
from ..corpus import (
    SentenceRecord,
    basic_tokenize,
    filter_sentences,
    prepare_corpus,
    read_forum_corpus,
    read_sentence_file,
    read_wiki_dump,
    write_sentence_file,
)
from ..parser.model import ParserConfig
from ..parser.train import train_parser
from ..pretrain.encoder import Encoder, EncoderConfig, initialize_new_embeddings, load_encoder, save_encoder
from ..pretrain.masking import MaskingConfig, build_instances
from ..pretrain.train import PretrainConfig, train_mlm
from ..runconfig import EPOCH_GRID, METHODS, VARIANTS, RunConfig, sample_run_configs
from ..treebank import read_conllu, split_treebank, write_conllu
from ..wordpiece import Vocabulary, train_vocabulary
from .stats import ExperimentResult, aggregate_results, relative_error_reduction, select_pretrain_epoch
from .synthetic import default_languages

logger = logging.getLogger(__name__)

MAX_RETRIES = 3


class StageError(RuntimeError):
    def __init__(self, stage: str, inputs: dict, cause: BaseException):
        self.stage = stage
        self.inputs = inputs
        self.cause = cause
        super().__init__(f"stage {stage!r} failed on inputs {json.dumps(inputs, sort_keys=True, default=str)}: "
                         f"{type(cause).__name__}: {cause}")


@dataclass
class Manifest:
    """Experiment description; see the README for the full schema."""

    name: str = "experiment"
    data: dict = field(default_factory=lambda: {"kind": "synthetic"})
    vocab: dict = field(default_factory=dict)
    encoder: dict = field(default_factory=dict)
    base_pretrain: dict = field(default_factory=dict)
    pretrain: dict = field(default_factory=dict)
    parser: dict = field(default_factory=dict)
    parser_frozen: dict = field(default_factory=dict)
    parser_ft: dict = field(default_factory=dict)
    methods: list = field(default_factory=lambda: list(METHODS))
    variants: list = field(default_factory=lambda: list(VARIANTS))
    epoch_grid: list = field(default_factory=lambda: list(EPOCH_GRID))
    n_runs: int = 5
    master_seed: int = 0
    control: bool = False
    max_retries: int = MAX_RETRIES

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS] + [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ValueError(f"unknown methods/variants in manifest: {bad}")
        if not self.epoch_grid or any(e not in EPOCH_GRID for e in self.epoch_grid):
            raise ValueError(f"epoch_grid must be a non-empty subset of {EPOCH_GRID}")
        self.epoch_grid = sorted(int(e) for e in self.epoch_grid)
        if self.n_runs < 1:
            raise ValueError("n_runs must be positive")
        if self.data.get("kind") not in ("synthetic", "files"):
            raise ValueError("data.kind must be 'synthetic' or 'files'")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "Manifest":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
        m = cls(**d)
        if base_dir is not None and m.data.get("kind") == "files":
            m.data = _resolve_paths(m.data, Path(base_dir))
        return m

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        # YAML is a superset of JSON, so one loader serves both
        d = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls.from_dict(d, Path(path).parent)

    def to_dict(self) -> dict:
        return asdict(self)


_PATH_KEYS = ("base_corpus", "base_encoder", "base_vocab", "target_corpus", "treebank", "train", "valid", "test",
              "control_train", "control_valid", "control_test")


def _resolve_paths(data: dict, base: Path) -> dict:
    out = dict(data)
    for k in _PATH_KEYS:
        v = out.get(k)
        if isinstance(v, str):
            out[k] = str((base / v).resolve())
        elif isinstance(v, list):
            out[k] = [str((base / p).resolve()) for p in v]
    return out


def content_key(*parts: Any) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def derived_seed(*parts: Any) -> int:
    return int(content_key("seed", *parts), 16) % 100_001


class ArtifactCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def stage(self, name: str, key: str, inputs: dict, build: Callable[[Path], dict | None]) -> tuple[Path, dict]:
        """Return the stage directory and its ``done.json`` payload, building it if absent."""
        d = self.root / f"{name}-{key}"
        done = d / "done.json"
        if done.exists():
            self.hits += 1
            return d, json.loads(done.read_text(encoding="utf-8"))
        self.misses += 1
        tmp = self.root / f".{name}-{key}.tmp"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        t0 = time.time()
        try:
            info = build(tmp) or {}
        except StageError:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        except Exception as exc:
            shutil.rmtree(tmp, ignore_errors=True)
            raise StageError(name, inputs, exc) from exc
        info = {"stage": name, "key": key, "inputs": inputs, **info}
        logger.info("stage %s (%s) built in %.1fs", name, key, time.time() - t0)
        (tmp / "done.json").write_text(json.dumps(info, indent=1, sort_keys=True), encoding="utf-8")
        if d.exists():
            shutil.rmtree(d)
        tmp.rename(d)
        return d, info


def _sub(cls, overrides: dict, **fixed):
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**{**overrides, **fixed})


def _base_epochs(m: Manifest) -> int:
    return int(m.base_pretrain.get("epochs", 5))


def _pretrain_config(m: Manifest, section: dict, grid, seed: int) -> PretrainConfig:
    opts = {k: v for k, v in section.items() if k != "epochs"}
    # the tiered rate only matters for tva; keep the config invariant otherwise
    opts.setdefault("tiered_lr", max(float(opts.get("lr", PretrainConfig.lr)), PretrainConfig.tiered_lr))
    return _sub(PretrainConfig, opts, epochs_grid=tuple(grid), seed=seed)


def _parser_config(m: Manifest, variant: str) -> ParserConfig:
    extra = m.parser_frozen if variant == "frozen" else m.parser_ft
    return _sub(ParserConfig, {**m.parser, **extra}, mode=variant)


# ---------------------------------------------------------------- data


def _synthetic_data(m: Manifest, d: Path) -> dict:
    cfg = m.data
    seed = int(cfg.get("seed", m.master_seed))
    langs = default_languages(seed, sizes=cfg.get("sizes"), shared_stem_frac=cfg.get("shared_stem_frac", 0.5))
    n_base = int(cfg.get("base_sentences", 4000))
    base = []
    for k, lang in enumerate(langs["base"]):
        base += lang.corpus(n_base // len(langs["base"]), seed=seed * 100 + 10 + k)
    n_train, n_valid, n_test = cfg.get("treebank", [200, 200, 1000])
    tb = langs["target"].treebank(n_train + n_valid + n_test, seed=seed * 100 + 20)
    train, valid, test = tb[:n_train], tb[n_train:n_train + n_valid], tb[n_train + n_valid:]
    held = {tuple(s.tokens) for s in tb}
    target = filter_sentences(langs["target"].corpus(int(cfg.get("target_sentences", 3000)), seed=seed * 100 + 30),
                              held)
    write_sentence_file(d / "base_corpus.txt", base)
    write_sentence_file(d / "target_corpus.txt", target)
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        write_conllu(d / f"{name}.conllu", part)
    info = {"n_base": len(base), "n_target": len(target), "treebank": [len(train), len(valid), len(test)]}
    if m.control:
        c_train, c_valid, c_test = cfg.get("control_treebank", [n_train, n_valid, n_test])
        ctb = langs["control"].treebank(c_train + c_valid + c_test, seed=seed * 100 + 40)
        write_conllu(d / "control_train.conllu", ctb[:c_train])
        write_conllu(d / "control_valid.conllu", ctb[c_train:c_train + c_valid])
        write_conllu(d / "control_test.conllu", ctb[c_train + c_valid:])
    return info


def _read_target_corpus(cfg: dict, eval_sents: set) -> list[SentenceRecord]:
    fmt = cfg.get("target_format", "sentences")
    path = cfg["target_corpus"]
    if fmt == "sentences":
        return filter_sentences(read_sentence_file(path), eval_sents)
    docs = read_wiki_dump(path) if fmt == "wiki" else read_forum_corpus(path)
    return prepare_corpus(docs, eval_sents, fmt=fmt, sample_fraction=float(cfg.get("sample_fraction", 1.0)),
                          seed=int(cfg.get("seed", 0)))


def _file_data(m: Manifest, d: Path) -> dict:
    cfg = m.data
    if "treebank" in cfg:
        train, valid, test = split_treebank(read_conllu(cfg["treebank"]), seed=int(cfg.get("seed", 0)))
    else:
        train, valid, test = (read_conllu(cfg[k]) for k in ("train", "valid", "test"))
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        write_conllu(d / f"{name}.conllu", part)
    eval_sents = {tuple(s.tokens) for s in train + valid + test}
    eval_sents |= {tuple(basic_tokenize(" ".join(s.tokens))) for s in train + valid + test}
    target = _read_target_corpus(cfg, eval_sents)
    write_sentence_file(d / "target_corpus.txt", target)
    base = []
    for p in cfg.get("base_corpus", []):
        base += read_sentence_file(p)
    write_sentence_file(d / "base_corpus.txt", base)
    if m.control:
        for k in ("train", "valid", "test"):
            shutil.copyfile(cfg[f"control_{k}"], d / f"control_{k}.conllu")
    return {"n_base": len(base), "n_target": len(target), "treebank": [len(train), len(valid), len(test)]}


def _data_inputs(m: Manifest) -> dict:
    if m.data["kind"] == "synthetic":
        return {"data": m.data, "control": m.control}
    digests = {}
    for k in _PATH_KEYS:
        v = m.data.get(k)
        for p in ([v] if isinstance(v, str) else v or []):
            digests[p] = file_digest(p)
    return {"data": m.data, "control": m.control, "files": digests}


# ---------------------------------------------------------------- runner


@dataclass
class PipelineOutput:
    results: dict[str, ExperimentResult]
    table: str
    summary: dict
    control: dict | None
    out_dir: Path
    cache_hits: int = 0
    cache_misses: int = 0
    skipped_stages: list[str] = field(default_factory=list)


class Pipeline:
    def __init__(self, manifest: Manifest, out_dir: str | Path):
        self.m = manifest
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache = ArtifactCache(self.out / "cache")
        self.run_configs = self._run_configs()
        self._encoders: dict[str, Encoder] = {}

    def _run_configs(self) -> list[RunConfig]:
        return sample_run_configs(n=self.m.n_runs, master_seed=self.m.master_seed)

    # -- stages

    def data(self):
        inputs = _data_inputs(self.m)
        build = _synthetic_data if self.m.data["kind"] == "synthetic" else _file_data
        return self.cache.stage("data", content_key("data", inputs), inputs, lambda d: build(self.m, d))

    def base_model(self, data_key: str):
        """Base vocabulary plus base encoder, trained here unless the manifest supplies them."""
        cfg = self.m.data
        if cfg.get("base_encoder"):
            inputs = {"encoder": file_digest(cfg["base_encoder"]), "vocab": file_digest(cfg["base_vocab"])}

            def build(d: Path):
                vocab = Vocabulary.load(cfg["base_vocab"])
                load_encoder(cfg["base_encoder"], vocab.fingerprint())
                shutil.copyfile(cfg["base_vocab"], d / "vocab.txt")
                shutil.copyfile(cfg["base_encoder"], d / "encoder.pt")
                return {"vocab_hash": vocab.fingerprint()}

            return self.cache.stage("base", content_key("base-given", inputs), inputs, build)

        size = int(self.m.vocab.get("base_size", 5000))
        inputs = {"data": data_key, "base_size": size, "encoder": self.m.encoder, "pretrain": self.m.base_pretrain,
                  "seed": self.m.master_seed}

        def build(d: Path):
            data_dir = self.cache.root / f"data-{data_key}"
            corpus = read_sentence_file(data_dir / "base_corpus.txt")
            if not corpus:
                raise ValueError("base corpus is empty and no base encoder was given")
            vocab = train_vocabulary([s.tokens for s in corpus], size)
            vocab.save(d / "vocab.txt")
            enc_cfg = _sub(EncoderConfig, self.m.encoder, vocab_size=len(vocab))
            epochs = _base_epochs(self.m)
            info = self._pretrain_with_retries(
                "base", lambda seed: self._train_base(corpus, vocab, enc_cfg, epochs, seed), d, {epochs: "encoder.pt"},
                vocab)
            return {"vocab_hash": vocab.fingerprint(), "vocab_size": len(vocab), **info}

        return self.cache.stage("base", content_key("base", inputs), inputs, build)

    def _train_base(self, corpus, vocab: Vocabulary, enc_cfg: EncoderConfig, epochs: int, seed: int):
        torch.manual_seed(seed)
        enc = Encoder(enc_cfg)
        cfg = _pretrain_config(self.m, self.m.base_pretrain, [epochs], seed)
        instances = build_instances(corpus, vocab, self._masking(cfg), seed=seed)
        return enc, train_mlm(enc, instances, cfg, mode="base", pad_id=vocab.pad_id)

    def _masking(self, cfg: PretrainConfig) -> MaskingConfig:
        max_seq = int(self.m.encoder.get("max_positions", EncoderConfig.max_positions))
        return MaskingConfig(max_seq=max_seq, max_pred=cfg.max_pred, mask_prob=cfg.mask_prob,
                             dup_factor=cfg.dup_factor)

    def _pretrain_with_retries(self, tag: str, train: Callable[[int], tuple], d: Path,
                               outputs: dict[int, str], vocab: Vocabulary) -> dict:
        seed = self.m.master_seed
        for attempt in range(self.m.max_retries + 1):
            try:
                enc, res = train(seed)
                break
            except FloatingPointError as exc:
                if attempt == self.m.max_retries:
                    raise
                seed = derived_seed(self.m.master_seed, tag, attempt + 1)
                logger.warning("%s: %s; retrying with seed %d", tag, exc, seed)
        for epoch, name in outputs.items():
            enc.load_merged_state_dict(res.checkpoints[epoch])
            save_encoder(d / name, enc, vocab.fingerprint(), {"epoch": epoch, "mode": tag})
        return {"epoch_losses": {str(k): v for k, v in res.epoch_losses.items()}, "seed": seed,
                "attempts": attempt + 1}

    def augmentation(self, data_key: str, base_key: str):
        v = self.m.vocab
        inputs = {"data": data_key, "base": base_key, "new_size": int(v.get("new_size", 5000)),
                  "k": int(v.get("k", 99)), "weighting": v.get("weighting", "token")}

        def build(d: Path):
            corpus = [s.tokens for s in read_sentence_file(self.cache.root / f"data-{data_key}" / "target_corpus.txt")]
            orig = Vocabulary.load(self.cache.root / f"base-{base_key}" / "vocab.txt")
            new = train_vocabulary(corpus, inputs["new_size"])
            aug, report = augment_vocabulary(corpus, orig, k=inputs["k"], weighting=inputs["weighting"], new_vocab=new)
            new.save(d / "new_vocab.txt")
            aug.save(d / "vocab.txt")
            return {"report": report.to_dict(), "vocab_hash": aug.fingerprint(), "new_vocab_size": len(new)}

        return self.cache.stage("augment", content_key("augment", inputs), inputs, build)

    def adapted(self, method: str, data_key: str, base_key: str, aug_key: str | None):
        grid = self.m.epoch_grid
        inputs = {"method": method, "data": data_key, "base": base_key, "augment": aug_key,
                  "pretrain": self.m.pretrain, "grid": grid, "encoder": self.m.encoder, "seed": self.m.master_seed}

        def build(d: Path):
            vocab_dir = self.cache.root / (f"augment-{aug_key}" if aug_key else f"base-{base_key}")
            vocab = Vocabulary.load(vocab_dir / "vocab.txt")
            corpus = read_sentence_file(self.cache.root / f"data-{data_key}" / "target_corpus.txt")
            base_path = self.cache.root / f"base-{base_key}" / "encoder.pt"

            def train(seed: int):
                enc = load_encoder(base_path)
                if method in ("va", "tva"):
                    initialize_new_embeddings(enc, vocab.filled_slot_ids, seed)
                cfg = _pretrain_config(self.m, self.m.pretrain, grid, seed)
                instances = build_instances(corpus, vocab, self._masking(cfg), seed=seed)
                return enc, train_mlm(enc, instances, cfg, mode=method, pad_id=vocab.pad_id)

            vocab.save(d / "vocab.txt")
            return self._pretrain_with_retries(method, train, d, {e: f"encoder_e{e}.pt" for e in grid}, vocab)

        return self.cache.stage(f"pretrain_{method}", content_key("pretrain", inputs), inputs, build)

    def parse_run(self, tag: str, encoder_path: Path, vocab_path: Path, treebank_dir: Path, prefix: str,
                  variant: str, run_index: int, enc_key: str, tb_key: str, method: str = "baseline",
                  epoch: int | None = None) -> dict:
        pcfg = _parser_config(self.m, variant)
        run = self.run_configs[run_index].with_method(method, variant, epoch)
        inputs = {"tag": tag, "encoder": enc_key, "encoder_file": encoder_path.name, "treebank": tb_key,
                  "prefix": prefix, "parser": asdict(pcfg), "run": run.to_dict()}

        def build(d: Path):
            vocab = Vocabulary.load(vocab_path)
            encoder = self._load_cached_encoder(encoder_path, vocab)
            train = read_conllu(treebank_dir / f"{prefix}train.conllu")
            valid = read_conllu(treebank_dir / f"{prefix}valid.conllu")
            test = read_conllu(treebank_dir / f"{prefix}test.conllu")
            labels = sorted({l for s in train + valid + test for l in s.gold.labels})
            cur = run
            for attempt in range(self.m.max_retries + 1):
                try:
                    res = train_parser(encoder, vocab, train, valid, pcfg, cur, labels)
                    break
                except FloatingPointError as exc:
                    if attempt == self.m.max_retries:
                        raise
                    cur = sample_run_configs(n=1, master_seed=derived_seed(self.m.master_seed, tag, run_index,
                                                                           attempt + 1))[0].with_method(
                        method, variant, epoch)
                    logger.warning("%s run %d: %s; resampled config", tag, run_index, exc)
            valid_report = res.parser.evaluate(valid)
            test_report = res.parser.evaluate(test)
            return {"run_index": run_index, "run_config": cur.to_dict(), "attempts": attempt + 1,
                    "best_epoch": res.best_epoch, "log": res.log,
                    "valid_las": valid_report.las, "valid_uas": valid_report.uas,
                    "test_las": test_report.las, "test_uas": test_report.uas}

        _, info = self.cache.stage("parse", content_key("parse", inputs), inputs, build)
        return info

    def _load_cached_encoder(self, path: Path, vocab: Vocabulary) -> Encoder:
        key = str(path)
        if key not in self._encoders:
            self._encoders = {key: load_encoder(path, vocab.fingerprint())}
        return self._encoders[key]

    # -- driver

    def run(self) -> PipelineOutput:
        data_dir, data_info = self.data()
        data_key = data_info["key"]
        base_dir, base_info = self.base_model(data_key)
        base_key = base_info["key"]
        skipped = []
        needs_aug = any(mth in ("va", "tva") for mth in self.m.methods)
        aug_info = self.augmentation(data_key, base_key)[1] if needs_aug else None
        aug_key = aug_info["key"] if aug_info else None
        if not needs_aug:
            skipped.append("augment")

        runs_dir = self.out / "runs"
        if runs_dir.exists():
            shutil.rmtree(runs_dir)
        runs_dir.mkdir()
        results: dict[str, ExperimentResult] = {}
        for method in self.m.methods:
            if method == "baseline":
                skipped.append("pretrain_baseline")
                sources = {None: (base_dir / "encoder.pt", base_dir / "vocab.txt", base_key)}
            else:
                pdir, pinfo = self.adapted(method, data_key, base_key, aug_key if method in ("va", "tva") else None)
                sources = {e: (pdir / f"encoder_e{e}.pt", pdir / "vocab.txt", pinfo["key"])
                           for e in self.m.epoch_grid}
            for variant in self.m.variants:
                res = ExperimentResult(method, variant, list(sources))
                per_epoch = {}
                for epoch, (enc_path, vocab_path, enc_key) in sources.items():
                    per_epoch[epoch] = [
                        self.parse_run(f"{method}-{variant}-e{epoch}", enc_path, vocab_path, data_dir, "",
                                       variant, i, enc_key, data_key, method, epoch)
                        for i in range(self.m.n_runs)
                    ]
                    for rec in per_epoch[epoch]:
                        name = f"{method}-{variant}-e{epoch}-r{rec['run_index']}.json"
                        (runs_dir / name).write_text(json.dumps({**rec, "method": method, "variant": variant,
                                                                 "pretrain_epoch": epoch}, indent=1),
                                                     encoding="utf-8")
                res.validation_las = {e: [r["valid_las"] for r in recs] for e, recs in per_epoch.items()}
                if None in sources:
                    res.selected_epoch = None
                else:
                    res.selected_epoch = select_pretrain_epoch(res.validation_las, self.m.epoch_grid, self.m.n_runs)
                chosen = per_epoch[res.selected_epoch]
                res.test_las = [r["test_las"] for r in chosen]
                res.test_uas = [r["test_uas"] for r in chosen]
                res.mean, res.std = aggregate_results(res.test_las, self.m.n_runs)
                results[res.key] = res

        control = self._control(data_dir, data_key, base_dir, base_key) if self.m.control else None
        table = format_table(results, self.m.methods, self.m.variants)
        summary = error_reduction_summary(results)
        (self.out / "results.json").write_text(json.dumps({
            "manifest": self.m.to_dict(),
            "results": {k: r.to_dict() for k, r in results.items()},
            "error_reduction": summary,
            "control": control,
            "augmentation": aug_info["report"] if aug_info else None,
        }, indent=1, sort_keys=True), encoding="utf-8")
        (self.out / "results.txt").write_text(table + "\n\n" + format_summary(summary, control) + "\n",
                                              encoding="utf-8")
        return PipelineOutput(results, table, summary, control, self.out, self.cache.hits, self.cache.misses,
                              skipped)

    def _control(self, data_dir: Path, data_key: str, base_dir: Path, base_key: str) -> dict:
        recs = [self.parse_run("control-frozen", base_dir / "encoder.pt", base_dir / "vocab.txt", data_dir,
                               "control_", "frozen", i, base_key, data_key) for i in range(self.m.n_runs)]
        las = [r["test_las"] for r in recs]
        return {"test_las": las, "test_uas": [r["test_uas"] for r in recs],
                "mean": float(np.mean(las)), "best_epochs": [r["best_epoch"] for r in recs],
                "epochs_run": [len(r["log"]) for r in recs]}


def run_pipeline(manifest: Manifest | dict | str | Path, out_dir: str | Path) -> PipelineOutput:
    if isinstance(manifest, (str, Path)):
        manifest = Manifest.load(manifest)
    elif isinstance(manifest, dict):
        manifest = Manifest.from_dict(manifest)
    return Pipeline(manifest, out_dir).run()


# ---------------------------------------------------------------- reporting


def format_table(results: dict[str, ExperimentResult], methods, variants) -> str:
    header = ["method"] + [v for v in variants]
    rows = [header]
    for mth in methods:
        row = [mth]
        for v in variants:
            r = results.get(f"{mth}/{v}")
            if r is None:
                row.append("-")
            else:
                ep = "" if r.selected_epoch is None else f" (ep {r.selected_epoch})"
                row.append(f"{r.mean:.2f} ± {r.std:.2f}{ep}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def error_reduction_summary(results: dict[str, ExperimentResult]) -> dict:
    out = {}
    for key, r in results.items():
        base = results.get(f"baseline/{r.variant}")
        if r.method == "baseline" or base is None:
            continue
        out[key] = {"baseline_las": base.mean, "las": r.mean,
                    "error_reduction": relative_error_reduction(base.mean, r.mean)}
    return out


def format_summary(summary: dict, control: dict | None = None) -> str:
    lines = ["relative error reduction vs baseline:"]
    for key in sorted(summary):
        s = summary[key]
        lines.append(f"  {key:<12} {s['baseline_las']:6.2f} -> {s['las']:6.2f}  {s['error_reduction']:+6.1f}%")
    if control:
        lines.append(f"control grammar LAS: {control['mean']:.2f}")
    return "\n".join(lines)


def report_from_runs(out_dir: str | Path) -> tuple[dict[str, ExperimentResult], str]:
    """Rebuild the results table from the per-run logs alone."""
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "results.json").read_text(encoding="utf-8"))
    m = Manifest.from_dict(meta["manifest"])
    recs: dict[tuple, dict] = {}
    for p in sorted((out_dir / "runs").glob("*.json")):
        r = json.loads(p.read_text(encoding="utf-8"))
        recs.setdefault((r["method"], r["variant"]), {}).setdefault(r["pretrain_epoch"], []).append(r)
    results = {}
    for (method, variant), by_epoch in recs.items():
        for runs in by_epoch.values():
            runs.sort(key=lambda r: r["run_index"])
        res = ExperimentResult(method, variant, sorted(by_epoch, key=lambda e: -1 if e is None else e))
        res.validation_las = {e: [r["valid_las"] for r in runs] for e, runs in by_epoch.items()}
        if None in by_epoch:
            res.selected_epoch = None
        else:
            res.selected_epoch = select_pretrain_epoch(res.validation_las, m.epoch_grid, m.n_runs)
        chosen = by_epoch[res.selected_epoch]
        res.test_las = [r["test_las"] for r in chosen]
        res.test_uas = [r["test_uas"] for r in chosen]
        res.mean, res.std = aggregate_results(res.test_las, m.n_runs)
        results[res.key] = res
    return results, format_table(results, m.methods, m.variants)
