"""Tensor ops, tape adjoints, and optimizer steps."""

import numpy as np
import pytest

from entnet.errors import DoubleBackward, InvalidRate, NearZeroNorm
from entnet.numerics import (
    Parameter,
    Tape,
    Tensor,
    adam_step,
    add,
    as_tensor,
    clip_global_norm,
    cross_entropy_logits,
    dropout,
    gather_rows,
    global_grad_norm,
    l2_normalize,
    linear,
    matmul,
    mul,
    prelu,
    reshape,
    scale,
    sgd_step,
    sigmoid,
    slice_step,
    softmax,
    sum_axis,
    zero_gradients,
)


def t(values, dtype=np.float64):
    return as_tensor(np.asarray(values, dtype=dtype))


class TestSigmoid:
    def test_zero_is_half(self):
        assert sigmoid(t(0.0)).data == pytest.approx(0.5)

    def test_symmetry_identity(self):
        x = np.linspace(-20, 20, 41)
        total = sigmoid(t(x)).data + sigmoid(t(-x)).data
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_scalar_value(self):
        assert sigmoid(t(1.6)).data == pytest.approx(0.832, abs=1e-3)

    def test_saturates_without_overflow(self):
        out = sigmoid(t([-500.0, 500.0])).data
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(0.0, abs=1e-12)
        assert out[1] == pytest.approx(1.0, abs=1e-12)


class TestPrelu:
    def test_unit_slope_is_identity(self):
        x = np.array([-3.0, -0.5, 0.0, 2.0])
        np.testing.assert_array_equal(prelu(t(x), t(np.ones(4))).data, x)

    def test_positive_branch(self):
        assert prelu(t(3.0), t(0.5)).data == pytest.approx(3.0)

    def test_negative_branch(self):
        assert prelu(t(-2.0), t(0.5)).data == pytest.approx(-1.0)


class TestSoftmax:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(softmax(t([0.0, 0.0])).data, [0.5, 0.5])

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        s = rng.normal(size=7)
        np.testing.assert_allclose(softmax(t(s)).data, softmax(t(s + 13.7)).data,
                                   atol=1e-12)

    def test_quarter_three_quarters(self):
        out = softmax(t([0.0, np.log(3.0)])).data
        np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-6)

    def test_sums_to_one(self):
        rng = np.random.default_rng(4)
        out = softmax(t(rng.normal(scale=30, size=(5, 11)))).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all(out >= 0)

    def test_large_scores_stable(self):
        out = softmax(t([1000.0, 1000.0, 0.0])).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out[:2], 0.5, atol=1e-6)


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize(t([3.0, 4.0])).data, [0.6, 0.8])

    def test_idempotent_on_unit_vector(self):
        v = np.array([0.6, 0.8])
        np.testing.assert_allclose(l2_normalize(t(v)).data, v, atol=1e-12)

    def test_zero_vector_raises(self):
        with pytest.raises(NearZeroNorm):
            l2_normalize(t([0.0, 0.0]))

    def test_output_norm_is_one(self):
        rng = np.random.default_rng(5)
        out = l2_normalize(t(rng.normal(size=(6, 9)))).data
        np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1.0, atol=1e-6)


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = np.arange(12.0).reshape(3, 4)
        np.testing.assert_array_equal(
            dropout(t(x), 0.0, True, np.random.default_rng(0)).data, x)

    def test_inference_is_identity(self):
        x = np.arange(6.0)
        np.testing.assert_array_equal(dropout(t(x), 0.5, False).data, x)

    def test_monte_carlo_mean(self):
        # inverted dropout: E[output] = input, checked over 1e5 masks
        rng = np.random.default_rng(6)
        x = np.full(8, 2.0)
        total = np.zeros(8)
        n = 100_000 // 8
        for _ in range(n):
            total += dropout(t(x), 0.5, True, rng).data
        np.testing.assert_allclose(total / n, x, rtol=0.02)

    def test_bad_rate_raises(self):
        with pytest.raises(InvalidRate):
            dropout(t([1.0]), 1.0, True, np.random.default_rng(0))
        with pytest.raises(InvalidRate):
            dropout(t([1.0]), -0.1, True, np.random.default_rng(0))


class TestBackward:
    def test_product_rule(self):
        a = Parameter(np.array(3.0), name="a")
        b = Parameter(np.array(5.0), name="b")
        with Tape() as tape:
            loss = mul(a, b)
            tape.backward(loss)
        assert a.grad == pytest.approx(5.0)
        assert b.grad == pytest.approx(3.0)

    def test_sigmoid_slope_at_zero(self):
        x = Parameter(np.array(0.0), name="x")
        with Tape() as tape:
            tape.backward(sigmoid(x))
        assert x.grad == pytest.approx(0.25)

    def test_double_backward_raises(self):
        x = Parameter(np.array(1.0), name="x")
        with Tape() as tape:
            loss = mul(x, x)
            tape.backward(loss)
            with pytest.raises(DoubleBackward):
                tape.backward(loss)

    def test_gradients_accumulate_across_reuse(self):
        x = Parameter(np.array(2.0), name="x")
        with Tape() as tape:
            loss = add(mul(x, x), mul(x, x))  # 2x^2, d/dx = 4x
            tape.backward(loss)
        assert x.grad == pytest.approx(8.0)

    def test_no_tape_records_nothing(self):
        x = Parameter(np.array(1.5), name="x")
        out = sigmoid(x)
        assert out._back is None


def finite_difference(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar-valued f at x, elementwise."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = f(x)
        flat[i] = keep - step
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2 * step)
    return g


def tape_gradient(op, x: np.ndarray, *rest) -> np.ndarray:
    p = Parameter(x.copy(), name="x")
    with Tape() as tape:
        out = op(p, *rest)
        loss = out
        while loss.data.ndim > 0:
            loss = sum_axis(loss, 0)
        tape.backward(loss)
    return p.grad


class TestOpAdjoints:
    """Each op's adjoint against central differences on random inputs."""

    rtol = 1e-5

    def check(self, op, x, *rest):
        analytic = tape_gradient(op, x.copy(), *rest)

        def scalar(v):
            out = op(as_tensor(v), *rest).data
            return float(out.sum())

        numeric = finite_difference(scalar, x.copy())
        np.testing.assert_allclose(analytic, numeric, rtol=self.rtol, atol=1e-8)

    def test_add_broadcast(self):
        rng = np.random.default_rng(10)
        other = as_tensor(rng.normal(size=(4,)))
        self.check(lambda p: add(p, other), rng.normal(size=(3, 4)))

    def test_mul_broadcast(self):
        rng = np.random.default_rng(11)
        other = as_tensor(rng.normal(size=(3, 1)))
        self.check(lambda p: mul(p, other), rng.normal(size=(3, 4)))

    def test_scale(self):
        rng = np.random.default_rng(12)
        self.check(lambda p: scale(p, -2.5), rng.normal(size=(5,)))

    def test_matmul(self):
        rng = np.random.default_rng(13)
        m = as_tensor(rng.normal(size=(4, 3)))
        self.check(lambda p: matmul(p, m), rng.normal(size=(2, 4)))

    def test_linear(self):
        rng = np.random.default_rng(14)
        w = as_tensor(rng.normal(size=(5, 4)))
        self.check(lambda p: linear(p, w), rng.normal(size=(2, 4)))

    def test_sum_axis_keepdims(self):
        rng = np.random.default_rng(15)
        self.check(lambda p: sum_axis(p, 1, keepdims=True), rng.normal(size=(3, 4)))

    def test_reshape(self):
        rng = np.random.default_rng(16)
        self.check(lambda p: reshape(p, (6,)), rng.normal(size=(2, 3)))

    def test_gather_rows(self):
        rng = np.random.default_rng(17)
        idx = np.array([[0, 2], [2, 1]])
        self.check(lambda p: gather_rows(p, idx), rng.normal(size=(3, 4)))

    def test_slice_step(self):
        rng = np.random.default_rng(18)
        self.check(lambda p: slice_step(p, 1), rng.normal(size=(2, 3, 4)))

    def test_sigmoid(self):
        rng = np.random.default_rng(19)
        self.check(sigmoid, rng.normal(size=(6,)))

    def test_prelu_away_from_kink(self):
        rng = np.random.default_rng(20)
        x = rng.normal(size=(8,))
        x[np.abs(x) < 0.1] = 0.5
        slopes = as_tensor(rng.normal(size=(8,)))
        self.check(lambda p: prelu(p, slopes), x)

    def test_prelu_slope_gradient(self):
        rng = np.random.default_rng(21)
        x = as_tensor(rng.normal(size=(8,)))
        self.check(lambda p: prelu(x, p), rng.normal(size=(8,)))

    def test_softmax(self):
        rng = np.random.default_rng(22)
        self.check(softmax, rng.normal(size=(2, 5)))

    def test_l2_normalize(self):
        rng = np.random.default_rng(23)
        self.check(l2_normalize, rng.normal(size=(3, 4)) + 0.5)

    def test_cross_entropy_logits(self):
        rng = np.random.default_rng(24)
        targets = np.array([1, 0, 3])
        self.check(lambda p: cross_entropy_logits(p, targets),
                   rng.normal(size=(3, 5)))


class TestFiniteness:
    def test_forward_ops_finite_on_wide_range(self):
        rng = np.random.default_rng(30)
        for _ in range(50):
            x = t(rng.uniform(-50, 50, size=(4, 6)))
            slopes = t(rng.uniform(-50, 50, size=(6,)))
            for out in (sigmoid(x), softmax(x), prelu(x, slopes),
                        add(x, x), mul(x, x), sum_axis(x, 0)):
                assert np.all(np.isfinite(out.data))


class TestClipGlobalNorm:
    def make(self, grads):
        params = []
        for i, g in enumerate(grads):
            p = Parameter(np.zeros_like(g), name=f"p{i}")
            p.grad = g.copy()
            params.append(p)
        return params

    def test_norm_80_halved(self):
        g = np.full(64, 10.0)  # global norm 80
        params = self.make([g])
        assert global_grad_norm(params) == pytest.approx(80.0)
        clip_global_norm(params, 40.0)
        np.testing.assert_allclose(params[0].grad, 5.0)

    def test_norm_below_threshold_unchanged(self):
        g = np.full(4, 5.0)  # norm 10
        params = self.make([g])
        clip_global_norm(params, 40.0)
        np.testing.assert_array_equal(params[0].grad, g)

    def test_zero_gradients_unchanged(self):
        params = self.make([np.zeros(7)])
        clip_global_norm(params, 40.0)
        np.testing.assert_array_equal(params[0].grad, 0.0)

    def test_output_norm_bounded(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            params = self.make([rng.normal(scale=50, size=(9, 9))
                                for _ in range(3)])
            clip_global_norm(params, 40.0)
            assert global_grad_norm(params) <= 40.0 + 1e-9

    def test_returns_preclip_norm(self):
        params = self.make([np.full(64, 10.0)])
        assert clip_global_norm(params, 40.0) == pytest.approx(80.0)


class TestAdamStep:
    def test_first_step_magnitude(self):
        p = Parameter(np.array(0.0), name="p")
        p.grad = np.array(1.0)
        adam_step([p], 0.01)
        assert p.data == pytest.approx(-0.01, abs=1e-6)

    def test_zero_gradient_no_motion(self):
        p = Parameter(np.array(1.0), name="p")
        p.grad = np.array(0.0)
        adam_step([p], 0.01)
        assert p.data == pytest.approx(1.0)

    def test_deterministic_across_replays(self):
        def run():
            p = Parameter(np.array([1.0, -2.0]), name="p")
            for step in range(5):
                p.grad = np.array([0.3, -0.7]) * (step + 1)
                adam_step([p], 0.01)
            return p.data.copy(), p.moment1.copy(), p.moment2.copy()

        a, b = run(), run()
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_second_moment_nonnegative(self):
        p = Parameter(np.array([1.0, 2.0]), name="p")
        p.grad = np.array([-3.0, 4.0])
        adam_step([p], 0.1)
        assert np.all(p.moment2 >= 0)


class TestSgdStep:
    def test_basic_update(self):
        p = Parameter(np.array(1.0), name="p")
        p.grad = np.array(2.0)
        sgd_step([p], 0.001)
        assert p.data == pytest.approx(0.998)

    def test_zero_gradient(self):
        p = Parameter(np.array(1.0), name="p")
        p.grad = np.array(0.0)
        sgd_step([p], 0.1)
        assert p.data == pytest.approx(1.0)

    def test_zero_lr(self):
        p = Parameter(np.array(1.0), name="p")
        p.grad = np.array(2.0)
        sgd_step([p], 0.0)
        assert p.data == pytest.approx(1.0)


class TestZeroGradients:
    def test_clears_all(self):
        p = Parameter(np.ones(3), name="p")
        p.grad = np.ones(3)
        zero_gradients([p])
        assert p.grad is None
