import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from eegalign.instruct import (
    DEFAULT_INSTRUCTION,
    CatalogEntry,
    FiLM,
    InstructConfig,
    InstructionHead,
    InstructionLevel,
    PrototypeBank,
    QFormer,
    AggregateHead,
    alignment_loss,
    default_catalog,
    load_catalog,
    predict,
    save_catalog,
)
from eegalign.textembed import pseudo_embed


def unit(v):
    v = torch.as_tensor(v, dtype=torch.float64)
    return v / v.norm()


def make_bank(k=8, n=3, seed=0, orthogonal=False):
    gen = torch.Generator().manual_seed(seed)
    if orthogonal:
        vectors = torch.eye(k, dtype=torch.float64)[:n]
    else:
        vectors = torch.randn(n, k, generator=gen, dtype=torch.float64)
        vectors = vectors / vectors.norm(dim=1, keepdim=True)
    return PrototypeBank(classes=tuple(f"c{i}" for i in range(n)), vectors=vectors)


class TestFiLM:
    def test_zero_params_zero_output(self):
        film = FiLM(d=6, text_dim=4)
        with torch.no_grad():
            film.proj.weight.zero_()
            film.proj.bias.zero_()
        m = torch.randn(5, 6, generator=torch.Generator().manual_seed(0))
        e = unit(torch.randn(4, generator=torch.Generator().manual_seed(1))).float()
        out = film(m, e)
        assert torch.equal(out, torch.zeros_like(m))

    def test_direct_matrix_oracle(self):
        torch.manual_seed(2)
        film = FiLM(d=6, text_dim=4).double()
        m = torch.randn(3, 6, dtype=torch.float64)
        for seed in (3, 4):
            e = unit(torch.randn(4, generator=torch.Generator().manual_seed(seed)))
            gb = torch.tanh(film.proj.weight @ e + film.proj.bias)
            gamma, beta = gb[:6], gb[6:]
            expected = gamma[None, :] * m + beta[None, :]
            torch.testing.assert_close(film(m, e), expected, rtol=1e-12, atol=1e-12)

    def test_two_instructions_differ(self):
        torch.manual_seed(5)
        film = FiLM(d=6, text_dim=4)
        e1 = unit(torch.randn(4, generator=torch.Generator().manual_seed(6))).float()
        e2 = unit(torch.randn(4, generator=torch.Generator().manual_seed(7))).float()
        g1, b1 = film.gamma_beta(e1)
        g2, b2 = film.gamma_beta(e2)
        assert not torch.allclose(g1, g2) or not torch.allclose(b1, b2)

    def test_affine_difference_identity(self):
        torch.manual_seed(8)
        film = FiLM(d=6, text_dim=4).double()
        e = unit(torch.randn(4, generator=torch.Generator().manual_seed(9)))
        m1 = torch.randn(7, 6, dtype=torch.float64)
        m2 = torch.randn(7, 6, dtype=torch.float64)
        gamma, _ = film.gamma_beta(e)
        lhs = film(m1, e) - film(m2, e)
        torch.testing.assert_close(lhs, gamma[None, :] * (m1 - m2), rtol=1e-12, atol=1e-12)

    def test_batched_matches_single(self):
        torch.manual_seed(10)
        film = FiLM(d=6, text_dim=4)
        m = torch.randn(2, 5, 6)
        e = torch.stack([
            unit(torch.randn(4, generator=torch.Generator().manual_seed(s))).float()
            for s in (11, 12)
        ])
        batched = film(m, e)
        for i in range(2):
            torch.testing.assert_close(batched[i], film(m[i], e[i]), rtol=1e-6, atol=1e-7)


class TestQFormer:
    def test_paper_shape(self):
        torch.manual_seed(13)
        qf = QFormer(d=256, config=InstructConfig(n_queries=8, qformer_layers=4, dropout=0.0))
        qf.eval()
        out = qf(torch.randn(160, 256))
        assert tuple(out.shape) == (8, 256)

    def test_single_key_attention_rows(self):
        torch.manual_seed(14)
        cfg = InstructConfig(n_queries=3, qformer_layers=2, dropout=0.0)
        qf = QFormer(d=8, config=cfg)
        qf.eval()
        with torch.no_grad():
            qf(torch.randn(1, 8))
        for layer in qf.layers:
            torch.testing.assert_close(
                layer.last_attention, torch.ones_like(layer.last_attention), rtol=0, atol=0
            )

    def test_single_key_closed_form(self):
        # Hand recomputation of one layer stack on a single memory token.
        torch.manual_seed(15)
        cfg = InstructConfig(
            n_queries=2, qformer_layers=1, dropout=0.0, query_self_attention=False, ff_scale=2
        )
        qf = QFormer(d=4, config=cfg).double()
        qf.eval()
        memory = torch.randn(1, 4, dtype=torch.float64)
        with torch.no_grad():
            out = qf(memory)
            layer = qf.layers[0]
            q = qf.queries.detach()
            # cross attention with one key: softmax row = [1.0] -> output w_v(memory)
            v = memory @ layer.cross.w_v.weight.T
            h = q + v.expand(2, -1)
            normed = torch.nn.functional.layer_norm(
                h, (4,), layer.norm_ff.weight, layer.norm_ff.bias
            )
            ff = normed @ layer.ff[0].weight.T + layer.ff[0].bias
            ff = torch.nn.functional.gelu(ff)
            ff = ff @ layer.ff[3].weight.T + layer.ff[3].bias
            h = h + ff
            oracle = torch.nn.functional.layer_norm(
                h, (4,), qf.final_norm.weight, qf.final_norm.bias
            )
        torch.testing.assert_close(out, oracle, rtol=1e-12, atol=1e-12)

    def test_key_permutation_invariance(self):
        torch.manual_seed(16)
        cfg = InstructConfig(n_queries=4, qformer_layers=3, dropout=0.0)
        qf = QFormer(d=16, config=cfg).double()
        qf.eval()
        memory = torch.randn(20, 16, dtype=torch.float64)
        perm = torch.randperm(20, generator=torch.Generator().manual_seed(17))
        with torch.no_grad():
            a = qf(memory)
            b = qf(memory[perm])
        torch.testing.assert_close(a, b, rtol=1e-9, atol=1e-9)

    def test_attention_rows_sum_to_one(self):
        torch.manual_seed(18)
        qf = QFormer(d=8, config=InstructConfig(n_queries=4, qformer_layers=2, dropout=0.0))
        qf.eval()
        with torch.no_grad():
            qf(torch.randn(11, 8))
        for layer in qf.layers:
            sums = layer.last_attention.sum(dim=-1)
            torch.testing.assert_close(sums, torch.ones_like(sums), rtol=0, atol=1e-6)


class TestAggregateHead:
    def test_identical_queries_reduce_to_mlp(self):
        torch.manual_seed(19)
        head = AggregateHead(d=8, text_dim=5)
        v = torch.randn(8)
        queries = v.expand(4, 8)
        expected = head.fc2(head.act(head.fc1(v)))
        torch.testing.assert_close(head(queries), expected, rtol=1e-6, atol=1e-6)

    def test_zero_queries_zero_bias(self):
        torch.manual_seed(20)
        head = AggregateHead(d=8, text_dim=5)
        with torch.no_grad():
            head.fc1.bias.zero_()
            head.fc2.bias.zero_()
        assert torch.equal(head(torch.zeros(4, 8)), torch.zeros(5))


class TestAlignmentLoss:
    def test_zero_at_prototype(self):
        bank = make_bank(k=8, n=3)
        h = bank.vectors[1].clone()
        assert float(alignment_loss(h, "c1", bank)) == pytest.approx(0.0, abs=1e-12)

    def test_antipodal_closed_form(self):
        bank = make_bank(k=8, n=2)
        h = -bank.vectors[0]
        assert float(alignment_loss(h, "c0", bank)) == pytest.approx(1.0, abs=1e-9)

    def test_dot_product_oracle(self):
        bank = make_bank(k=16, n=5, seed=21)
        gen = torch.Generator().manual_seed(22)
        for _ in range(10):
            h = torch.randn(16, generator=gen, dtype=torch.float64)
            got = float(alignment_loss(h, "c3", bank))
            e = bank.vectors[3]
            expected = (1.0 - float(h @ e) / float(h.norm())) / 5
            assert got == pytest.approx(expected, rel=1e-10)

    def test_unknown_label_named(self):
        bank = make_bank()
        with pytest.raises(KeyError, match="nope"):
            alignment_loss(torch.ones(8, dtype=torch.float64), "nope", bank)

    def test_zero_vector_rejected(self):
        bank = make_bank()
        with pytest.raises(ValueError, match="zero"):
            alignment_loss(torch.zeros(8, dtype=torch.float64), "c0", bank)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 7))
    def test_range_property(self, seed, n):
        bank = make_bank(k=12, n=n, seed=seed)
        h = torch.randn(12, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)
        value = float(alignment_loss(h, "c0", bank))
        assert 0.0 <= value <= 2.0 / n + 1e-12

    def test_batch_mean(self):
        bank = make_bank(k=8, n=4, seed=23)
        gen = torch.Generator().manual_seed(24)
        hs = torch.randn(3, 8, generator=gen, dtype=torch.float64)
        labels = ["c0", "c2", "c3"]
        batch = float(alignment_loss(hs, labels, bank))
        singles = np.mean([float(alignment_loss(hs[i], labels[i], bank)) for i in range(3)])
        assert batch == pytest.approx(singles, rel=1e-12)


class TestPredict:
    def test_exact_prototype(self):
        bank = make_bank(k=8, n=3, seed=25)
        assert predict(bank.vectors[2].clone(), bank).class_name == "c2"

    def test_scale_invariance(self):
        bank = make_bank(k=8, n=4, seed=26)
        h = torch.randn(8, generator=torch.Generator().manual_seed(27), dtype=torch.float64)
        a = predict(h, bank)
        b = predict(17.0 * h, bank)
        assert a.class_name == b.class_name
        for c in bank.classes:
            assert a.scores[c] == pytest.approx(b.scores[c], abs=1e-12)

    def test_orthogonal_mixture(self):
        bank = make_bank(k=8, n=3, orthogonal=True)
        h = 0.9 * bank.vectors[0] + 0.1 * bank.vectors[1]
        result = predict(h, bank)
        assert result.class_name == "c0"
        assert result.scores["c0"] > result.scores["c1"] > result.scores["c2"]

    def test_tie_breaks_to_first(self):
        vectors = torch.eye(4, dtype=torch.float64)[:2]
        bank = PrototypeBank(classes=("first", "second"), vectors=vectors)
        h = unit(torch.tensor([1.0, 1.0, 0.0, 0.0]))
        assert predict(h, bank).class_name == "first"

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            predict(torch.zeros(8, dtype=torch.float64), make_bank())


class TestPrototypeBank:
    def test_from_embeddings(self):
        embs = [pseudo_embed(t, 1, dim=16) for t in ("Left", "Right")]
        bank = PrototypeBank.from_embeddings(embs)
        assert bank.classes == ("Left", "Right")
        assert bank.size == 2

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="unit-norm"):
            PrototypeBank(classes=("a",), vectors=torch.full((1, 4), 2.0))

    def test_rejects_duplicates(self):
        v = torch.eye(4)[:2]
        with pytest.raises(ValueError, match="unique"):
            PrototypeBank(classes=("a", "a"), vectors=v)


class TestInstructionHead:
    def test_end_to_end_shapes(self):
        torch.manual_seed(28)
        cfg = InstructConfig(n_queries=2, qformer_layers=1, text_dim=16, dropout=0.0)
        head = InstructionHead(d=8, config=cfg)
        head.eval()
        m = torch.randn(2, 12, 8)
        e = torch.randn(2, 16)
        e = e / e.norm(dim=1, keepdim=True)
        out = head(m, e)
        assert tuple(out.shape) == (2, 16)

    def test_softmax_variant(self):
        torch.manual_seed(29)
        cfg = InstructConfig(n_queries=2, qformer_layers=1, text_dim=16, dropout=0.0, head="softmax")
        head = InstructionHead(d=8, config=cfg, n_classes=4)
        head.eval()
        out = head(torch.randn(3, 10, 8), torch.randn(3, 16))
        assert tuple(out.shape) == (3, 4)

    def test_softmax_needs_classes(self):
        cfg = InstructConfig(head="softmax")
        with pytest.raises(ValueError, match="n_classes"):
            InstructionHead(d=8, config=cfg, n_classes=0)


class TestCatalog:
    def test_bundled_catalog_content(self):
        catalog = default_catalog()
        assert len(catalog) == 20
        entry = catalog["OpenBMI-MI"]
        assert entry.task_instruction == "Decode motor imagery"
        assert set(entry.targets) == {"Left", "Right"}
        assert catalog["Benchmark"].targets == catalog["BETA"].targets
        assert len(catalog["Benchmark"].targets) == 40

    def test_instruction_levels(self):
        entry = CatalogEntry("x", "task text", "detailed text", ("a", "b"))
        assert entry.instruction(InstructionLevel.NONE) == DEFAULT_INSTRUCTION == "Default"
        assert entry.instruction(InstructionLevel.TASK) == "task text"
        assert entry.instruction(InstructionLevel.TASK_AND_TARGETS) == "detailed text"

    def test_round_trip(self, tmp_path):
        entry = CatalogEntry("demo", "do it", "do it (a vs b)", ("a", "b"))
        path = tmp_path / "catalog.json"
        save_catalog({"demo": entry}, path)
        assert load_catalog(path)["demo"] == entry
