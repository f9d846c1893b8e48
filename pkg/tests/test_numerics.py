"""Kernel-level tests: hand-computed cases, invariants, and
finite-difference oracles for every backward pass."""

import numpy as np
import pytest

from adfuse.errors import DegenerateBatchError, NonFiniteError, ShapeError
from adfuse.numerics import (
    INFER,
    TRAIN,
    AttentionScorer,
    BatchNorm,
    Dense,
    GradCheckReport,
    SgdMomentum,
    attention_pool,
    attention_pool_backward,
    attention_pool_batch,
    dropout_backward,
    dropout_forward,
    grad_check,
    l2_normalize,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    mse_grad,
    mse_loss,
)


def fd_grad(f, x, h=1e-6):
    """Independent central-difference oracle over a flat array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        g.reshape(-1)[i] = (fp - fm) / (2 * h)
    return g


class TestDense:
    def test_identity(self):
        layer = Dense(weight=np.eye(2), bias=np.zeros(2))
        y, _ = layer.forward(np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal(y, [[3.0, 4.0]])

    def test_hand_case(self):
        layer = Dense(weight=np.array([[1.0], [1.0]]), bias=np.array([1.0]))
        y, _ = layer.forward(np.array([[2.0, 5.0]]))
        np.testing.assert_array_equal(y, [[8.0]])

    def test_shape_error(self):
        layer = Dense(weight=np.zeros((2, 3)), bias=np.zeros(3))
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((1, 3)))

    def test_backward_zero(self):
        layer = Dense(weight=np.ones((2, 2)), bias=np.zeros(2))
        x = np.array([[1.0, 2.0]])
        _, cache = layer.forward(x)
        gx, gw, gb = layer.backward(cache, np.zeros((1, 2)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_backward_1x1_symbolic(self):
        # y = a*w + b, so dL/dw = a*g for upstream gradient g.
        a, w, g = 1.7, -0.3, 2.5
        layer = Dense(weight=np.array([[w]]), bias=np.zeros(1))
        _, cache = layer.forward(np.array([[a]]))
        _, gw, gb = layer.backward(cache, np.array([[g]]))
        assert gw[0, 0] == pytest.approx(a * g, rel=1e-12)
        assert gb[0] == pytest.approx(g, rel=1e-12)

    def test_backward_matches_fd(self):
        rng = np.random.default_rng(0)
        layer = Dense.initialize(3, 4, rng)
        x = rng.standard_normal((5, 3))
        coeff = rng.standard_normal((5, 4))  # loss = sum(coeff * y)

        def loss():
            y, _ = layer.forward(x)
            return float((coeff * y).sum())

        _, cache = layer.forward(x)
        gx, gw, gb = layer.backward(cache, coeff)
        np.testing.assert_allclose(gw, fd_grad(loss, layer.weight), rtol=1e-5)
        np.testing.assert_allclose(gb, fd_grad(loss, layer.bias), rtol=1e-5)
        np.testing.assert_allclose(gx, fd_grad(loss, x), rtol=1e-5)


class TestBatchNorm:
    def test_constant_column_goes_to_zero(self):
        bn = BatchNorm.initialize(2)
        x = np.column_stack([np.full(6, 3.7), np.arange(6, dtype=float)])
        y, _ = bn.forward(x, TRAIN)
        assert np.all(np.abs(y[:, 0]) <= 1e-6)

    def test_gamma_zero_gives_beta(self):
        bn = BatchNorm.initialize(3)
        bn.gamma = np.zeros(3)
        bn.beta = np.array([1.0, -2.0, 0.5])
        y, _ = bn.forward(np.random.default_rng(1).standard_normal((4, 3)), TRAIN)
        np.testing.assert_array_equal(y, np.tile(bn.beta, (4, 1)))

    def test_train_moments(self):
        rng = np.random.default_rng(2)
        bn = BatchNorm.initialize(4)
        y, _ = bn.forward(rng.standard_normal((8, 4)) * 3 + 1, TRAIN)
        np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-6)
        np.testing.assert_allclose(y.var(axis=0), 1.0, atol=1e-4)

    def test_degenerate_batch(self):
        bn = BatchNorm.initialize(2)
        with pytest.raises(DegenerateBatchError):
            bn.forward(np.zeros((1, 2)), TRAIN)

    def test_infer_uses_running_stats_without_mutation(self):
        bn = BatchNorm.initialize(2)
        bn.running_mean = np.array([1.0, -1.0])
        bn.running_var = np.array([4.0, 0.25])
        before = (bn.running_mean.copy(), bn.running_var.copy())
        x = np.array([[3.0, 0.0]])
        y, cache = bn.forward(x, INFER)
        assert cache is None
        expect = (x - before[0]) / np.sqrt(before[1] + bn.epsilon)
        np.testing.assert_allclose(y, expect, rtol=1e-12)
        np.testing.assert_array_equal(bn.running_mean, before[0])
        np.testing.assert_array_equal(bn.running_var, before[1])

    def test_backward_zero(self):
        bn = BatchNorm.initialize(3)
        _, cache = bn.forward(np.random.default_rng(3).standard_normal((4, 3)), TRAIN)
        gx, gg, gb = bn.backward(cache, np.zeros((4, 3)))
        assert not gx.any() and not gg.any() and not gb.any()

    def test_backward_matches_fd(self):
        rng = np.random.default_rng(4)
        bn = BatchNorm.initialize(3)
        bn.gamma = rng.standard_normal(3)
        bn.beta = rng.standard_normal(3)
        x = rng.standard_normal((4, 3))
        coeff = rng.standard_normal((4, 3))

        def loss():
            y, _ = bn.forward(x, TRAIN)
            return float((coeff * y).sum())

        _, cache = bn.forward(x, TRAIN)
        gx, gg, gb = bn.backward(cache, coeff)
        np.testing.assert_allclose(gx, fd_grad(loss, x), rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(gg, fd_grad(loss, bn.gamma), rtol=1e-4)
        np.testing.assert_allclose(gb, fd_grad(loss, bn.beta), rtol=1e-4)

    def test_constant_grad_out_row_sums_vanish(self):
        # BN output is invariant to shifting a whole input column, so the
        # input gradient must sum to zero over the batch.
        rng = np.random.default_rng(5)
        bn = BatchNorm.initialize(3)
        _, cache = bn.forward(rng.standard_normal((6, 3)), TRAIN)
        gx, _, _ = bn.backward(cache, np.full((6, 3), 0.7))
        np.testing.assert_allclose(gx.sum(axis=0), 0.0, atol=1e-12)

    def test_backward_without_cache(self):
        bn = BatchNorm.initialize(2)
        with pytest.raises(ShapeError):
            bn.backward(None, np.zeros((2, 2)))


class TestDropout:
    def test_p_zero_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        y, mask = dropout_forward(0.0, x, TRAIN, np.random.default_rng(0))
        np.testing.assert_array_equal(y, x)
        assert mask is None

    def test_infer_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        y, mask = dropout_forward(0.5, x, INFER)
        np.testing.assert_array_equal(y, x)
        assert mask is None

    def test_keep_fraction(self):
        rng = np.random.default_rng(11)
        x = np.ones((100, 100))
        y, mask = dropout_forward(0.5, x, TRAIN, rng)
        assert abs(mask.mean() - 0.5) <= 0.02

    def test_expectation_preserved(self):
        rng = np.random.default_rng(12)
        x = np.full((100, 100), 2.0)
        y, _ = dropout_forward(0.5, x, TRAIN, rng)
        assert abs(y.mean() - 2.0) / 2.0 <= 0.02

    def test_invalid_p(self):
        with pytest.raises(ShapeError):
            dropout_forward(1.0, np.zeros((2, 2)), TRAIN, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            dropout_forward(-0.1, np.zeros((2, 2)), TRAIN, np.random.default_rng(0))

    def test_backward_routes_through_mask(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((4, 5))
        y, mask = dropout_forward(0.5, x, TRAIN, rng)
        g = rng.standard_normal((4, 5))
        gx = dropout_backward(0.5, mask, g)
        np.testing.assert_allclose(gx, g * mask / 0.5, rtol=1e-12)


class TestAttentionPool:
    def test_singleton(self):
        scorer = AttentionScorer(weight=np.array([0.3, -0.2]), bias=np.zeros(1))
        pooled, w, _ = attention_pool(scorer, np.array([[1.0, 2.0]]))
        np.testing.assert_array_equal(w, [1.0])
        np.testing.assert_array_equal(pooled, [1.0, 2.0])

    def test_identical_rows_uniform(self):
        scorer = AttentionScorer(weight=np.array([0.5, 1.0]), bias=np.array([0.1]))
        items = np.tile([2.0, -1.0], (4, 1))
        pooled, w, _ = attention_pool(scorer, items)
        np.testing.assert_allclose(w, 0.25, rtol=1e-12)
        np.testing.assert_allclose(pooled, [2.0, -1.0], rtol=1e-12)

    def test_zero_weight_gives_mean(self):
        scorer = AttentionScorer.initialize(3)
        rng = np.random.default_rng(20)
        items = rng.standard_normal((5, 3))
        pooled, w, _ = attention_pool(scorer, items)
        np.testing.assert_allclose(w, 0.2, rtol=1e-12)
        np.testing.assert_allclose(pooled, items.mean(axis=0), rtol=1e-12)

    def test_empty_input(self):
        with pytest.raises(ShapeError):
            attention_pool(AttentionScorer.initialize(3), np.zeros((0, 3)))

    def test_simplex_property(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            dim = int(rng.integers(1, 6))
            m = int(rng.integers(1, 8))
            scorer = AttentionScorer(weight=rng.standard_normal(dim),
                                     bias=rng.standard_normal(1))
            _, w, _ = attention_pool(scorer, rng.standard_normal((m, dim)) * 3)
            assert np.all(w >= 0)
            assert abs(w.sum() - 1.0) <= 1e-6

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(22)
        scorer = AttentionScorer(weight=rng.standard_normal(4),
                                 bias=rng.standard_normal(1))
        items = rng.standard_normal((6, 4))
        perm = rng.permutation(6)
        p1, w1, _ = attention_pool(scorer, items)
        p2, w2, _ = attention_pool(scorer, items[perm])
        np.testing.assert_allclose(w2, w1[perm], atol=1e-10)
        np.testing.assert_allclose(p2, p1, atol=1e-10)

    def test_score_shift_invariance(self):
        rng = np.random.default_rng(23)
        w = rng.standard_normal(3)
        items = rng.standard_normal((5, 3))
        s1 = AttentionScorer(weight=w, bias=np.array([0.0]))
        s2 = AttentionScorer(weight=w, bias=np.array([17.5]))
        _, w1, _ = attention_pool(s1, items)
        _, w2, _ = attention_pool(s2, items)
        np.testing.assert_allclose(w1, w2, atol=1e-10)

    def test_backward_matches_fd(self):
        rng = np.random.default_rng(24)
        scorer = AttentionScorer(weight=rng.standard_normal(3),
                                 bias=rng.standard_normal(1))
        items = rng.standard_normal((2, 4, 3))
        coeff = rng.standard_normal((2, 3))

        def loss():
            pooled, _, _ = attention_pool_batch(scorer, items)
            return float((coeff * pooled).sum())

        _, _, cache = attention_pool_batch(scorer, items)
        g_items, gw, gb = attention_pool_backward(scorer, cache, coeff)
        np.testing.assert_allclose(g_items, fd_grad(loss, items), rtol=1e-5, atol=1e-9)
        np.testing.assert_allclose(gw, fd_grad(loss, scorer.weight), rtol=1e-5)
        # The bias shifts all scores equally, so its true gradient is zero.
        np.testing.assert_allclose(gb, fd_grad(loss, scorer.bias),
                                   rtol=1e-5, atol=1e-12)


class TestL2Normalize:
    def test_hand_case(self):
        np.testing.assert_allclose(l2_normalize(np.array([3.0, 4.0])),
                                   [0.6, 0.8], rtol=1e-12)

    def test_zero_vector_guarded(self):
        np.testing.assert_array_equal(l2_normalize(np.zeros(4)), np.zeros(4))

    def test_unit_vector_unchanged(self):
        v = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(l2_normalize(v), v, rtol=1e-12)

    def test_norm_bound(self):
        rng = np.random.default_rng(30)
        for _ in range(100):
            v = rng.standard_normal(5) * 10.0 ** int(rng.integers(-14, 3))
            n = np.linalg.norm(l2_normalize(v))
            assert n <= 1 + 1e-9
            if np.linalg.norm(v) >= 1:
                assert abs(n - 1.0) <= 1e-6

    def test_rows_backward_matches_fd(self):
        rng = np.random.default_rng(31)
        v = rng.standard_normal((3, 4))
        coeff = rng.standard_normal((3, 4))

        def loss():
            out, _ = l2_normalize_rows(v)
            return float((coeff * out).sum())

        _, cache = l2_normalize_rows(v)
        g = l2_normalize_rows_backward(cache, coeff)
        np.testing.assert_allclose(g, fd_grad(loss, v), rtol=1e-5, atol=1e-9)


class TestMse:
    def test_equal_is_zero(self):
        assert mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_hand_case(self):
        assert mse_loss(np.array([1.0, 3.0]), np.zeros(2)) == pytest.approx(5.0)

    def test_errors(self):
        with pytest.raises(ShapeError):
            mse_loss(np.zeros(2), np.zeros(3))
        with pytest.raises(ShapeError):
            mse_loss(np.zeros(0), np.zeros(0))

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(40)
        pred = rng.standard_normal(6)
        target = rng.standard_normal(6)

        def loss():
            return mse_loss(pred, target)

        np.testing.assert_allclose(mse_grad(pred, target), fd_grad(loss, pred),
                                   rtol=1e-6, atol=1e-10)


class TestSgdMomentum:
    def test_momentum_zero_is_vanilla(self):
        p = {"w": np.array([1.0, -2.0])}
        g = {"w": np.array([0.5, 0.25])}
        opt = SgdMomentum(learning_rate=0.1, momentum=0.0)
        opt.step(p, g)
        np.testing.assert_array_equal(p["w"], [1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25])

    def test_zero_grad_no_change(self):
        p = {"w": np.array([1.0])}
        opt = SgdMomentum(learning_rate=0.1, momentum=0.9)
        opt.step(p, {"w": np.zeros(1)})
        np.testing.assert_array_equal(p["w"], [1.0])

    def test_two_step_displacement(self):
        # constant gradient g: displacement lr*g*(1 + (1+momentum)).
        p = {"w": np.array([0.0])}
        g = {"w": np.array([2.0])}
        opt = SgdMomentum(learning_rate=0.1, momentum=0.9)
        opt.step(p, g)
        opt.step(p, g)
        assert p["w"][0] == pytest.approx(-0.1 * 2.0 * (1 + 1.9), rel=1e-12)

    def test_shape_mismatch(self):
        opt = SgdMomentum(learning_rate=0.1, momentum=0.0)
        with pytest.raises(ShapeError):
            opt.step({"w": np.zeros(2)}, {"w": np.zeros(3)})


class TestGradCheck:
    def test_quadratic(self):
        def f(params):
            p = params["p"]
            return float(p[0] ** 2), {"p": 2 * p}

        report = grad_check(f, {"p": np.array([3.0])}, tolerance=1e-6)
        assert isinstance(report, GradCheckReport)
        assert report.passed
        assert report.max_rel_error <= 1e-6

    def test_nan_aborts(self):
        def f(params):
            return float("nan"), {"p": np.zeros(1)}

        with pytest.raises(NonFiniteError):
            grad_check(f, {"p": np.array([1.0])}, tolerance=1e-4)

    def test_wrong_gradient_fails(self):
        def f(params):
            p = params["p"]
            return float(p[0] ** 2), {"p": 3 * p}  # wrong on purpose

        report = grad_check(f, {"p": np.array([2.0])}, tolerance=1e-4)
        assert not report.passed


def test_random_backward_trials():
    """Every backward op matches central differences on random small shapes."""
    rng = np.random.default_rng(99)
    for trial in range(20):
        n, din, dout = (int(rng.integers(2, 6)) for _ in range(3))
        layer = Dense.initialize(din, dout, rng)
        bn = BatchNorm.initialize(dout)
        bn.gamma = rng.standard_normal(dout)
        scorer = AttentionScorer(weight=rng.standard_normal(dout),
                                 bias=rng.standard_normal(1))
        x = rng.standard_normal((n, din))
        coeff = rng.standard_normal(dout)

        def loss():
            h, _ = layer.forward(x)
            h, _ = bn.forward(h, TRAIN)
            pooled, _, _ = attention_pool_batch(scorer, h[None])
            normed, _ = l2_normalize_rows(pooled)
            return float((coeff * normed[0]).sum())

        h, d_cache = layer.forward(x)
        h, bn_cache = bn.forward(h, TRAIN)
        pooled, _, p_cache = attention_pool_batch(scorer, h[None])
        normed, n_cache = l2_normalize_rows(pooled)

        g = l2_normalize_rows_backward(n_cache, coeff[None])
        g_items, gw_s, gb_s = attention_pool_backward(scorer, p_cache, g)
        g, gg, gbeta = bn.backward(bn_cache, g_items[0])
        gx, gw, gb = layer.backward(d_cache, g)

        np.testing.assert_allclose(gw, fd_grad(loss, layer.weight),
                                   rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(gg, fd_grad(loss, bn.gamma),
                                   rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(gw_s, fd_grad(loss, scorer.weight),
                                   rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(gx, fd_grad(loss, x), rtol=1e-4, atol=1e-8)
