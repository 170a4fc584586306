import logging
import math

import numpy as np
import pytest
import torch

from langadapt.pretrain import (
    Encoder,
    EncoderConfig,
    MaskingConfig,
    PretrainConfig,
    build_instances,
    collate,
    initialize_new_embeddings,
    load_encoder,
    make_param_groups,
    mlm_loss,
    num_to_mask,
    read_shard,
    save_encoder,
    train_mlm,
    warmup_linear_decay,
    write_shard,
)
from langadapt.pretrain.train import prepare_for_mode
from langadapt.wordpiece import Vocabulary

from oracles import reference_encoder

LETTERS = "abcdefghij"


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.from_pieces(list(LETTERS) + ["##" + c for c in LETTERS])


def words(n, seed=0):
    rng = np.random.default_rng(seed)
    return ["".join(rng.choice(list(LETTERS), size=rng.integers(1, 4))) for _ in range(n)]


def tiny_encoder(vocab_size, **kw):
    cfg = dict(vocab_size=vocab_size, n_layers=1, hidden=8, n_heads=2, ff_dim=16, max_positions=32, dropout=0.0)
    cfg.update(kw)
    return Encoder(EncoderConfig(**cfg))


class TestMasking:
    @pytest.mark.parametrize("n,expected", [(10, 2), (200, 20), (3, 1), (1, 1), (30, 5), (16, 2), (17, 3)])
    def test_count(self, n, expected):
        assert num_to_mask(n, 0.15, 20) == expected

    def test_duplicates_and_framing(self, vocab):
        sents = [words(n, seed=n) for n in (2, 5, 9)]
        inst = build_instances(sents, vocab, MaskingConfig(), seed=3)
        assert len(inst) == 15
        for x in inst:
            assert x.input_ids[0] == vocab.cls_id and x.input_ids[-1] == vocab.sep_id
            assert all(0 < p < len(x.input_ids) - 1 for p in x.masked_positions)
            assert x.masked_positions == sorted(set(x.masked_positions))
            assert len(x.masked_positions) == len(x.masked_labels) >= 1
            assert x.attention_mask == [1] * len(x.input_ids)

    def test_labels_are_original_pieces(self, vocab):
        cfg = MaskingConfig(mask_token_frac=0.0, random_token_frac=0.0)
        inst = build_instances([["abc", "de"]], vocab, cfg)
        orig = inst[0].input_ids
        for x in inst:
            assert x.input_ids == orig
            assert [orig[p] for p in x.masked_positions] == x.masked_labels

    def test_truncation(self, vocab):
        inst = build_instances([["a"] * 300], vocab, MaskingConfig(), seed=0)
        assert all(len(x.input_ids) == 128 for x in inst)
        assert all(len(x.masked_positions) == 19 for x in inst)  # round(0.15 * 126) = 19

    def test_random_replacements_are_content_pieces(self, vocab):
        cfg = MaskingConfig(mask_token_frac=0.0, random_token_frac=1.0)
        content = set(vocab.content_ids())
        for x in build_instances([words(40, s) for s in range(20)], vocab, cfg):
            assert all(x.input_ids[p] in content for p in x.masked_positions)

    def test_empty_sentence_skipped(self, vocab, caplog):
        with caplog.at_level(logging.WARNING):
            inst = build_instances([[], ["ab"]], vocab)
        assert len(inst) == 5
        assert "no content pieces" in caplog.text

    def test_deterministic_and_order_free(self, vocab):
        sents = [words(6, s) for s in range(5)]
        a = build_instances(sents, vocab, seed=9)
        assert a == build_instances(sents, vocab, seed=9)
        assert a != build_instances(sents, vocab, seed=10)
        # each sentence's instances depend only on (seed, index)
        b = build_instances(sents[:3], vocab, seed=9)
        assert a[:15] == b

    def test_proportions(self, vocab):
        inst = build_instances([words(30, s) for s in range(300)], vocab, seed=1)
        orig = build_instances([words(30, s) for s in range(300)], vocab,
                               MaskingConfig(mask_token_frac=0.0, random_token_frac=0.0), seed=1)
        n = mask = 0
        for x in inst:
            for p in x.masked_positions:
                n += 1
                mask += x.input_ids[p] == vocab.mask_id
        assert abs(mask / n - 0.8) < 0.02
        assert len(orig) == len(inst)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            MaskingConfig(mask_token_frac=0.9, random_token_frac=0.2)

    def test_shard_round_trip(self, vocab, tmp_path):
        inst = build_instances([words(7, 1), words(3, 2)], vocab)
        write_shard(tmp_path / "s.jsonl", inst, vocab.fingerprint())
        assert read_shard(tmp_path / "s.jsonl") == inst

    def test_shard_header_checked(self, tmp_path):
        (tmp_path / "bad.jsonl").write_text('{"format": "other"}\n', encoding="utf-8")
        with pytest.raises(ValueError):
            read_shard(tmp_path / "bad.jsonl")


class TestEncoder:
    def test_zero_parameters_uniform(self, vocab):
        enc = tiny_encoder(len(vocab), layer_norm=False)
        with torch.no_grad():
            for p in enc.parameters():
                p.zero_()
        inst = build_instances([["abc"]], vocab)
        b = collate(inst)
        out = enc(b["input_ids"], b["attention_mask"], b["masked_index"])
        assert torch.count_nonzero(out.mlm_logits) == 0
        assert mlm_loss(out.mlm_logits, b["masked_labels"]).item() == pytest.approx(math.log(len(vocab)))

    def test_matches_numpy_reference(self):
        torch.manual_seed(0)
        enc = tiny_encoder(12, hidden=2, n_heads=1, ff_dim=3).double()
        with torch.no_grad():
            for p in enc.parameters():
                p.uniform_(-1.0, 1.0)
        ids = [3, 7]
        out = enc(torch.tensor([ids]), torch.ones(1, 2, dtype=torch.long),
                  (torch.tensor([0]), torch.tensor([1])))
        params = {k: v.numpy() for k, v in enc.state_dict().items()}
        acts, logits = reference_encoder(params, ids, 1, 1, masked_positions=[1])
        for a, r in zip(out.activations, acts):
            np.testing.assert_allclose(a[0].detach().numpy(), r, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(out.mlm_logits.detach().numpy(), logits, rtol=1e-10, atol=1e-10)

    def test_multihead_reference(self):
        torch.manual_seed(1)
        enc = tiny_encoder(20, n_layers=2, hidden=6, n_heads=3, ff_dim=5).double()
        ids = [1, 5, 19, 4, 2]
        out = enc(torch.tensor([ids]), torch.ones(1, 5, dtype=torch.long), (torch.tensor([0, 0]), torch.tensor([1, 3])))
        params = {k: v.numpy() for k, v in enc.state_dict().items()}
        acts, logits = reference_encoder(params, ids, 2, 3, masked_positions=[1, 3])
        np.testing.assert_allclose(out.activations[-1][0].detach().numpy(), acts[-1], atol=1e-10)
        np.testing.assert_allclose(out.mlm_logits.detach().numpy(), logits, atol=1e-10)

    def test_batch_order_and_padding(self, vocab):
        torch.manual_seed(0)
        enc = tiny_encoder(len(vocab))
        enc.eval()
        inst = build_instances([words(3, 1), words(8, 2), words(5, 3)], vocab)[::5]
        b = collate(inst)
        out = enc(b["input_ids"], b["attention_mask"])
        rb = collate(inst[::-1])
        rev = enc(rb["input_ids"], rb["attention_mask"])
        for i, x in enumerate(inst):
            n = len(x.input_ids)
            alone = enc(torch.tensor([x.input_ids]), torch.ones(1, n, dtype=torch.long))
            torch.testing.assert_close(out.activations[-1][i, :n], alone.activations[-1][0])
            torch.testing.assert_close(rev.activations[-1][len(inst) - 1 - i, :n], alone.activations[-1][0])

    def test_out_of_range_id(self):
        enc = tiny_encoder(10)
        with pytest.raises(IndexError):
            enc(torch.tensor([[1, 10]]), torch.ones(1, 2, dtype=torch.long))

    def test_untied_head(self, vocab):
        enc = tiny_encoder(len(vocab), tie_mlm_head=False)
        b = collate(build_instances([["abc"]], vocab))
        assert enc(b["input_ids"], b["attention_mask"], b["masked_index"]).mlm_logits.shape[1] == len(vocab)

    def test_bad_heads(self):
        with pytest.raises(ValueError):
            EncoderConfig(hidden=10, n_heads=3)

    def test_checkpoint_round_trip(self, vocab, tmp_path):
        enc = tiny_encoder(len(vocab))
        initialize_new_embeddings(enc, [1, 2], seed=0)
        save_encoder(tmp_path / "e.pt", enc, vocab.fingerprint())
        back = load_encoder(tmp_path / "e.pt", vocab.fingerprint())
        assert back.new_slot_ids == [1, 2]
        for k, v in enc.merged_state_dict().items():
            assert torch.equal(v, back.merged_state_dict()[k])
        with pytest.raises(ValueError):
            load_encoder(tmp_path / "e.pt", "0" * 16)


class TestLoss:
    def test_two_class(self):
        loss = mlm_loss(torch.tensor([[2.0, 0.0]]), torch.tensor([0]))
        assert loss.item() == pytest.approx(math.log(1 + math.exp(-2)), abs=1e-6)
        assert loss.item() == pytest.approx(0.1269, abs=1e-4)

    def test_margin_limit(self):
        assert mlm_loss(torch.tensor([[100.0, 0.0, 0.0]]), torch.tensor([0])).item() < 1e-30

    def test_no_positions(self):
        with pytest.raises(ValueError):
            mlm_loss(torch.zeros(0, 5), torch.zeros(0, dtype=torch.long))


class TestParamGroups:
    def test_lapt_single_group(self):
        enc = tiny_encoder(30)
        groups = make_param_groups(enc, "lapt", PretrainConfig())
        assert len(groups) == 1 and groups[0]["lr"] == 2e-5

    def test_tva_split_partition(self):
        enc = tiny_encoder(30)
        initialize_new_embeddings(enc, range(1, 5), seed=0)
        prepare_for_mode(enc, "tva")
        groups = make_param_groups(enc, "tva", PretrainConfig())
        assert [g["lr"] for g in groups] == [2e-5, 1e-4]
        ids = [id(p) for g in groups for p in g["params"]]
        assert len(ids) == len(set(ids)) == len(list(enc.parameters()))

    def test_tva_without_rows(self):
        with pytest.raises(ValueError):
            make_param_groups(tiny_encoder(30), "tva", PretrainConfig())
        with pytest.raises(ValueError):
            prepare_for_mode(tiny_encoder(30), "va")

    def test_config_invariant(self):
        with pytest.raises(ValueError):
            PretrainConfig(lr=1e-3, tiered_lr=1e-4)


class TestNewEmbeddings:
    def test_isolation_and_determinism(self):
        enc = tiny_encoder(200, hidden=16)
        before = enc.piece_embeddings.weight.detach().clone()
        slots = list(range(1, 100))
        initialize_new_embeddings(enc, slots, seed=4)
        after = enc.piece_embeddings.weight.detach()
        others = [i for i in range(200) if i not in slots]
        assert torch.equal(before[others], after[others])
        again = initialize_new_embeddings(tiny_encoder(200, hidden=16), slots, seed=4)
        assert torch.equal(again.piece_embeddings.weight[slots], after[slots])

    def test_distribution(self):
        enc = initialize_new_embeddings(tiny_encoder(200, hidden=64), range(1, 100), seed=0)
        rows = enc.piece_embeddings.weight.detach()[1:100].double()
        assert rows.abs().max() <= 0.04 + 1e-9
        assert abs(rows.mean().item()) < 3 * 0.02 / math.sqrt(99 * 64)


class TestSchedule:
    def test_warmup_and_decay(self):
        assert warmup_linear_decay(0, 100, 10, 1.0) == 0.0
        assert warmup_linear_decay(5, 100, 10, 1.0) == pytest.approx(0.5)
        assert warmup_linear_decay(10, 100, 10, 1.0) == pytest.approx(1.0)
        assert warmup_linear_decay(55, 100, 10, 1.0) == pytest.approx(0.5)
        assert warmup_linear_decay(100, 100, 10, 1.0) == 0.0


class TestTrain:
    def test_loss_decreases_and_checkpoints(self, vocab):
        torch.manual_seed(0)
        sents = [words(8, s) for s in range(50)]
        inst = build_instances(sents, vocab, seed=0)
        enc = tiny_encoder(len(vocab), n_layers=2, hidden=32, n_heads=2, ff_dim=64)
        cfg = PretrainConfig(lr=1e-3, tiered_lr=1e-3, warmup_steps=20, batch_size=32, epochs_grid=(1, 5, 20))
        res = train_mlm(enc, inst, cfg, mode="lapt")
        assert sorted(res.checkpoints) == [1, 5, 20]
        assert res.epoch_losses[20] < res.epoch_losses[1]
        assert len(res.losses) == 20 * math.ceil(len(inst) / 32)

    def test_non_finite_aborts(self, vocab):
        enc = tiny_encoder(len(vocab))
        with torch.no_grad():
            enc.mlm_bias.fill_(float("nan"))
        with pytest.raises(FloatingPointError):
            train_mlm(enc, build_instances([["abc"]], vocab), PretrainConfig(epochs_grid=(1,)))

    def test_va_only_trains_merged_rows(self, vocab):
        enc = tiny_encoder(len(vocab))
        initialize_new_embeddings(enc, [1, 2, 3], seed=0)
        before = enc.merged_state_dict()
        res = train_mlm(enc, build_instances([words(6, 0)], vocab), PretrainConfig(epochs_grid=(1,)), mode="va")
        after = res.checkpoints[1]
        assert set(after) == set(before)
        assert enc.piece_embeddings.slot_weight is not None

    def test_empty(self):
        with pytest.raises(ValueError):
            train_mlm(tiny_encoder(30), [], PretrainConfig())
