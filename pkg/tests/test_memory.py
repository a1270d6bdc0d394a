import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stmae.memory import (
    MemoryPool,
    cosine_similarity,
    nearest_two,
    read,
    read_weights,
    separation_loss,
    write,
    write_weights,
)


def t(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def random_instance(rng, n_max=8, m_max=16, c_max=4):
    N = int(rng.integers(2, n_max + 1))
    M = int(rng.integers(1, m_max + 1))
    C = int(rng.integers(2, c_max + 1))
    items = rng.normal(size=(N, C))
    items /= np.linalg.norm(items, axis=1, keepdims=True)
    queries = rng.normal(size=(M, C)) * rng.uniform(0.5, 3.0)
    k = int(rng.integers(1, M + 1))
    return items, queries, k


class TestCosine:
    def test_equal_vector(self):
        assert cosine_similarity(t([[0.6, 0.8]]), t([[0.6, 0.8]])).item() == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity(t([[1.0, 0.0]]), t([[0.0, 2.0]])).item() == pytest.approx(0.0)

    def test_antiparallel(self):
        assert cosine_similarity(t([[1.0, 0.0]]), t([[-1.0, 0.0]])).item() == pytest.approx(-1.0)

    def test_degenerate_query_is_zero(self):
        s = cosine_similarity(t([[1.0, 0.0], [0.0, 1.0]]), t([[0.0, 0.0], [1.0, 1.0]]))
        assert s[:, 0].abs().max().item() == 0.0
        assert torch.isfinite(s).all()


class TestWrite:
    def test_single_item_fixed_point(self):
        m = t([[0.6, 0.8]])
        out = write(m, m.clone(), 1)
        assert torch.allclose(out, m, atol=1e-12)

    def test_equal_similarities_give_uniform_weights(self):
        items = t([[1.0, 0.0]])
        q = t([[1.0, 1.0], [1.0, -1.0], [2.0, 2.0], [3.0, -3.0]])  # all at 45 degrees
        w = write_weights(cosine_similarity(items, q), k_top=4)
        np.testing.assert_allclose(w.numpy(), 0.25, atol=1e-12)

    def test_hand_example_top2(self):
        sim = t([[0.9, 0.5, 0.1, -0.2]])
        w = write_weights(sim, 2).numpy()[0]
        np.testing.assert_allclose(w, [0.692, 0.308, 0.0, 0.0], atol=1e-3)

    def test_negative_retained_weights_clamped(self):
        sim = t([[0.8, -0.3, -0.5]])
        w = write_weights(sim, 3).numpy()[0]
        np.testing.assert_allclose(w, [1.0, 0.0, 0.0])

    def test_all_negative_leaves_item_direction(self):
        items = t([[1.0, 0.0]])
        out = write(items, t([[-1.0, 0.1], [-2.0, -0.3]]), 2)
        np.testing.assert_allclose(out.numpy(), items.numpy())

    def test_k_top_too_large_warns_and_clamps(self):
        sim = t([[0.1, 0.2]])
        with pytest.warns(UserWarning, match="clamped"):
            w = write_weights(sim, 5)
        assert (w > 0).sum() == 2

    def test_unconstrained(self):
        sim = t([[0.1, 0.2, 0.3]])
        assert (write_weights(sim, None) > 0).sum() == 3

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_naive_oracle(self, seed):
        items, queries, k = random_instance(np.random.default_rng(seed))
        got = write(t(items), t(queries), k).numpy()
        want = oracles.write(items, queries, k)
        np.testing.assert_allclose(got, want, atol=1e-10)
        np.testing.assert_allclose(write_weights(cosine_similarity(t(items), t(queries)), k).numpy(),
                                   oracles.write_weights(items, queries, k), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), alpha=st.floats(0.01, 100.0))
    def test_topk_set_invariant_to_query_scale(self, seed, alpha):
        items, queries, k = random_instance(np.random.default_rng(seed))
        w1 = write_weights(cosine_similarity(t(items), t(queries)), k)
        w2 = write_weights(cosine_similarity(t(items), t(alpha * queries)), k)
        assert torch.equal(w1 > 0, w2 > 0)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_sparsity_and_unit_norm(self, seed):
        items, queries, k = random_instance(np.random.default_rng(seed))
        w = write_weights(cosine_similarity(t(items), t(queries)), k)
        assert ((w > 0).sum(dim=1) <= k).all()
        sums = w.sum(dim=1)
        assert torch.all((sums - 1).abs() < 1e-12) or torch.all((sums == 0) | ((sums - 1).abs() < 1e-12))
        out = write(t(items), t(queries), k)
        np.testing.assert_allclose(out.norm(dim=1).numpy(), 1.0, atol=1e-12)


class TestRead:
    def test_two_orthonormal_items(self):
        items = t([[1.0, 0.0], [0.0, 1.0]])
        w = read_weights(items, items[:1]).numpy()[0]
        np.testing.assert_allclose(w, [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-12)
        np.testing.assert_allclose(w, [0.731, 0.269], atol=1e-3)
        np.testing.assert_allclose(read(items, items[:1]).numpy()[0], w, atol=1e-12)

    def test_identical_items(self):
        m = np.array([0.6, 0.0, 0.8])
        items = t(np.stack([m, m, m]))
        q = t(np.random.default_rng(0).normal(size=(5, 3)))
        np.testing.assert_allclose(read(items, q).numpy(), np.tile(m, (5, 1)), atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_naive_oracle(self, seed):
        items, queries, _ = random_instance(np.random.default_rng(100 + seed))
        want, want_w = oracles.read(items, queries)
        np.testing.assert_allclose(read(t(items), t(queries)).numpy(), want, atol=1e-12)
        np.testing.assert_allclose(read_weights(t(items), t(queries)).numpy(), want_w, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_convexity(self, seed):
        items, queries, _ = random_instance(np.random.default_rng(seed))
        w = read_weights(t(items), t(queries))
        assert (w > 0).all()
        np.testing.assert_allclose(w.sum(dim=1).numpy(), 1.0, atol=1e-12)
        assert (read(t(items), t(queries)).norm(dim=1) <= 1 + 1e-12).all()

    def test_read_never_mutates_pool(self):
        pool = MemoryPool(8, 4, 2, seed=3)
        before = pool.items.clone()
        pool.read(torch.randn(2, 4, 3, 3))
        assert torch.equal(pool.items, before)


class TestSeparationLoss:
    def test_equidistant_contributes_zero(self):
        items = t([[1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]])
        assert separation_loss(items, t([[0.0, 0.0]])).item() == pytest.approx(0.0)

    def test_query_on_item_is_negative(self):
        items = t([[1.0, 0.0], [0.0, 1.0]])
        val = separation_loss(items, t([[1.0, 0.0]])).item()
        assert val == pytest.approx(-2.0)

    def test_tie_breaks_by_index(self):
        items = t([[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0]])
        i1, i2 = nearest_two(items, t([[0.0, 0.0]]))
        assert (i1.item(), i2.item()) == (0, 1)

    @pytest.mark.parametrize("seed", range(10))
    def test_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        items, queries = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
        assert separation_loss(t(items), t(queries)).item() == pytest.approx(
            oracles.separation_loss(items, queries), abs=1e-6)

    def test_needs_two_items(self):
        with pytest.raises(ValueError):
            separation_loss(t([[1.0, 0.0]]), t([[1.0, 0.0]]))


class TestMemoryPool:
    def test_initial_items_unit_norm_and_seeded(self):
        a, b = MemoryPool(32, 16, seed=5), MemoryPool(32, 16, seed=5)
        assert torch.equal(a.items, b.items)
        np.testing.assert_allclose(a.items.norm(dim=1).numpy(), 1.0, atol=1e-6)

    def test_write_requires_training_mode(self):
        pool = MemoryPool(4, 3).eval()
        with pytest.raises(RuntimeError):
            pool.write(torch.randn(1, 3, 2, 2))

    def test_write_updates_items_only_in_training(self):
        pool = MemoryPool(4, 3, k_top=2)
        before = pool.items.clone()
        pool.write(torch.randn(2, 3, 2, 2))
        assert not torch.equal(before, pool.items)
        np.testing.assert_allclose(pool.items.norm(dim=1).numpy(), 1.0, atol=1e-6)

    def test_separation_gradient_reaches_features(self):
        pool = MemoryPool(4, 3)
        z = torch.randn(2, 3, 2, 2, requires_grad=True)
        pool.separation_loss(z).backward()
        assert z.grad is not None and z.grad.abs().sum() > 0

    def test_needs_two_items(self):
        with pytest.raises(ValueError):
            MemoryPool(1, 3)
