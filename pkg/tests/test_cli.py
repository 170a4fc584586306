import json

import pytest

from langadapt.cli import main
from langadapt.corpus import write_sentence_file
from langadapt.experiment import default_languages
from langadapt.treebank import read_conllu, write_conllu

from test_experiment import TINY

SIZES = {"NOUN": 30, "ADJ": 15, "VERB": 20, "ADV": 4}


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    langs = default_languages(0, sizes=SIZES)
    write_sentence_file(d / "base.txt", [s for lang in langs["base"] for s in lang.corpus(300, seed=1)])
    write_sentence_file(d / "target.txt", langs["target"].corpus(200, seed=2))
    write_conllu(d / "all.conllu", langs["target"].treebank(40, seed=3))
    return d


def run(*argv):
    assert main([str(a) for a in argv]) == 0


def test_full_chain(files, capsys):
    d = files
    run("treebank", "split", d / "all.conllu", "--ratios", "0.5,0.25,0.25", "--seed", 1, "--out-dir", d / "tb")
    assert len(read_conllu(d / "tb" / "train.conllu")) == 20
    run("vocab", "train", "--corpus", d / "base.txt", "--size", 250, "--out", d / "vocab.txt")
    capsys.readouterr()
    run("vocab", "stats", "--vocab", d / "vocab.txt", "--corpus", d / "target.txt")
    stats = json.loads(capsys.readouterr().out)
    assert stats["unk_tokens"] > 0 and stats["wp_per_token"] >= 1
    run("vocab", "augment", "--orig", d / "vocab.txt", "--corpus", d / "target.txt", "--new-size", 600,
        "--out", d / "aug.txt", "--report", d / "report.json")
    report = json.loads((d / "report.json").read_text())
    assert set(report) == {"unk_before", "unk_after", "pieces_added", "fallback_used"}
    assert report["unk_after"] < report["unk_before"]

    run("pretrain", "make-shards", "--vocab", d / "vocab.txt", "--corpus", d / "base.txt", "--out", d / "b.shard",
        "--dup-factor", 1)
    run("pretrain", "run", "--mode", "base", "--vocab", d / "vocab.txt", "--shards", d / "b.shard",
        "--out-dir", d / "base", "--epochs-grid", "1", "--lr", 1e-3, "--tiered-lr", 1e-3, "--warmup", 5,
        "--batch", 64, "--layers", 1, "--hidden", 16, "--heads", 2, "--ff", 32)
    run("pretrain", "make-shards", "--vocab", d / "aug.txt", "--corpus", d / "target.txt", "--out", d / "t.shard",
        "--dup-factor", 1)
    run("pretrain", "run", "--mode", "tva", "--vocab", d / "aug.txt", "--shards", d / "t.shard",
        "--encoder", d / "base" / "encoder_e1.pt", "--out-dir", d / "tva", "--epochs-grid", "1",
        "--warmup", 5, "--batch", 64)
    assert (d / "tva" / "encoder_e1.pt").exists()

    run("parse", "train", "--mode", "frozen", "--encoder", d / "tva" / "encoder_e1.pt", "--vocab", d / "aug.txt",
        "--treebank", d / "tb", "--bilstm-layers", 1, "--bilstm-hidden", 16, "--max-epochs", 2, "--patience", 1,
        "--out", d / "parser.pt")
    run("parse", "predict", "--model", d / "parser.pt", "--in", d / "tb" / "test.conllu", "--out", d / "pred.conllu")
    capsys.readouterr()
    run("eval", "score", "--gold", d / "tb" / "test.conllu", "--pred", d / "pred.conllu")
    line = capsys.readouterr().out
    assert line.startswith("UAS ") and "LAS" in line


def test_corpus_clean(tmp_path):
    (tmp_path / "dump.txt").write_text("<doc id=\"1\">\n== Head ==\nOne two three. Four five six seven eight.\n</doc>\n")
    run("corpus", "clean", tmp_path / "dump.txt", "--out", tmp_path / "clean.txt")
    assert (tmp_path / "clean.txt").read_text().splitlines() == ["One two three", "Four five six seven eight"]


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["eval", "score", "--gold", str(tmp_path / "missing"), "--pred", str(tmp_path / "x")]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["pretrain", "run", "--mode", "bogus", "--vocab", "v", "--shards", "s", "--out-dir", "o"])


def test_experiment_report(files, capsys):
    manifest = files / "m.json"
    manifest.write_text(json.dumps({**TINY, "methods": ["baseline"], "control": False}))
    run("experiment", "run", "--manifest", manifest, "--out", files / "exp")
    first = capsys.readouterr().out
    run("experiment", "report", "--dir", files / "exp")
    assert capsys.readouterr().out.strip() in first
