import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minitransformer.autodiff import (
    EPS_ABS,
    Layout,
    LayoutMismatchError,
    NonFiniteError,
    ParamVector,
    SegmentView,
    Tensor,
    exp,
    fd_check,
    gradient,
    sgd_step,
    value_and_gradient,
)


def flat_layout(n):
    return Layout([("x", (n,))])


def pv(*values):
    values = np.array(values, dtype=float)
    return ParamVector(values, flat_layout(values.size))


class TestLayout:
    def test_segments_disjoint_and_cover(self):
        layout = Layout([("a", (2, 3)), ("b", ()), ("c", (4,))])
        assert layout.size == 11
        covered = []
        for name in layout.names():
            start, stop, _ = layout.spec(name)
            covered.extend(range(start, stop))
        assert covered == list(range(11))

    def test_duplicate_name_rejected(self):
        with pytest.raises(ValueError):
            Layout([("a", (2,)), ("a", (3,))])

    def test_equality_is_order_sensitive(self):
        a = Layout([("a", (2,)), ("b", (3,))])
        b = Layout([("b", (3,)), ("a", (2,))])
        assert a != b
        assert a == Layout([("a", (2,)), ("b", (3,))])


class TestGradient:
    def test_sum_of_squares(self):
        theta = pv(1.0, -2.0)
        g = gradient(lambda v: (v["x"] * v["x"]).sum(), theta)
        assert np.allclose(g.values, [2.0, -4.0])

    def test_product_exp_at_zero(self):
        theta = pv(0.0, 5.0)

        def loss(v):
            x = v["x"]
            return (x[0] * x[1]).exp()

        g = gradient(loss, theta)
        assert np.allclose(g.values, [5.0, 0.0])

    def test_no_side_effect_on_theta(self):
        theta = pv(1.0, 2.0)
        before = theta.values.copy()
        gradient(lambda v: (v["x"] * v["x"]).sum(), theta)
        assert np.array_equal(theta.values, before)

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(0)
        theta = ParamVector(rng.normal(size=6), flat_layout(6))

        def loss(v):
            x = v["x"]
            return ((x * x).sum() + (x[0] * x[3]).exp() / (1.0 + (x[1] * x[2]).exp()))

        g1 = gradient(loss, theta)
        g2 = gradient(loss, theta)
        assert np.array_equal(g1.values, g2.values)

    def test_non_finite_loss_raises(self):
        theta = pv(800.0)
        with pytest.raises(NonFiniteError):
            gradient(lambda v: v["x"].sum().exp(), theta)

    def test_non_finite_gradient_names_segment(self):
        layout = Layout([("good", (1,)), ("bad", (1,))])
        theta = ParamVector(np.array([1.0, 0.0]), layout)

        def loss(v):
            return v["good"].sum() + (v["bad"] ** 0.5).sum()

        with pytest.raises(NonFiniteError, match="bad"):
            gradient(loss, theta)

    def test_loss_must_be_scalar_tensor(self):
        theta = pv(1.0, 2.0)
        with pytest.raises(ValueError):
            gradient(lambda v: v["x"] * 2.0, theta)
        with pytest.raises(TypeError):
            gradient(lambda v: 3.0, theta)

    def test_matmul_and_broadcast_ops(self):
        layout = Layout([("w", (2, 3)), ("b", (3,))])
        rng = np.random.default_rng(3)
        theta = ParamVector(rng.normal(size=layout.size), layout)
        X = rng.normal(size=(4, 2))

        def loss(v):
            out = X @ v["w"] + v["b"]
            return (out * out).sum()

        report = fd_check(loss, theta, step=1e-6)
        assert report.max_rel_err < 1e-7


class TestFdCheck:
    def test_linear_function(self):
        theta = pv(2.5)
        report = fd_check(lambda v: v["x"].sum(), theta, step=1e-4)
        assert np.allclose(report.numeric.values, [1.0])
        assert report.max_rel_err < 1e-10

    def test_cubic_truncation_order(self):
        theta = pv(1.0)
        report = fd_check(lambda v: (v["x"] ** 3).sum(), theta, step=1e-3)
        # central differences on x**3 carry an O(step**2) error term
        assert abs(report.numeric.values[0] - 3.0) < 5e-6
        assert report.max_rel_err < 1e-5

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            fd_check(lambda v: v["x"].sum(), pv(1.0), step=0.0)

    def test_nonfinite_probe_raises(self):
        theta = pv(709.0)
        with pytest.raises(NonFiniteError):
            fd_check(lambda v: exp(v["x"].sum()), theta, step=1.0)

    def test_elementary_compositions_random(self, rng):
        # add, multiply, divide, dot product, exp, power compositions
        for trial in range(100):
            n = int(rng.integers(2, 7))
            layout = flat_layout(n)
            theta = ParamVector(rng.normal(0, 0.5, n), layout)
            a = rng.normal(0, 1.0, n)

            def loss(v):
                x = v["x"]
                quad = (x * x).sum()
                dot = (x * a).sum()
                gauss = exp(-(quad) * 0.5)
                return quad + dot * gauss + (dot * dot) / (1.0 + quad) + (x ** 4).sum() * 0.1

            report = fd_check(loss, theta, step=1e-5)
            assert report.max_rel_err < 1e-6, f"trial {trial}: {report.max_rel_err}"


class TestSgdStep:
    def test_plain_step(self):
        theta = pv(1.0, 1.0)
        grad = pv(1.0, -1.0)
        out = sgd_step(theta, grad, 0.1)
        assert np.allclose(out.values, [0.9, 1.1])

    def test_projection_reaches_zero(self):
        layout = Layout([("dist", ())])
        theta = ParamVector(np.array([0.05]), layout)
        grad = ParamVector(np.array([1.0]), layout)
        out = sgd_step(theta, grad, 0.1, nonneg_segments={"dist"})
        assert out.values[0] == 0.0

    def test_zero_learning_rate_identity(self):
        theta = pv(3.0, -4.0)
        out = sgd_step(theta, pv(10.0, 10.0), 0.0)
        assert np.array_equal(out.values, theta.values)

    def test_layout_mismatch(self):
        theta = pv(1.0, 2.0)
        other = ParamVector(np.zeros(2), Layout([("y", (2,))]))
        with pytest.raises(LayoutMismatchError):
            sgd_step(theta, other, 0.1)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=8),
           st.floats(0, 2))
    @settings(max_examples=50, deadline=None)
    def test_constrained_segment_never_negative(self, values, eta):
        n = len(values)
        layout = Layout([("w", (n,))])
        theta = ParamVector(np.abs(np.array(values)), layout)
        grad = ParamVector(np.array(values), layout)
        out = sgd_step(theta, grad, eta, nonneg_segments={"w"})
        assert np.all(out.values >= 0.0)


class TestSegmentView:
    def test_ndarray_and_tensor_agree(self, rng):
        layout = Layout([("a", (2, 2)), ("b", (3,))])
        values = rng.normal(size=layout.size)
        nd = SegmentView(values, layout)
        tp = SegmentView(Tensor(values), layout)
        assert np.array_equal(nd["a"], tp["a"].data)
        assert np.array_equal(nd["b"], tp["b"].data)

    def test_value_and_gradient_returns_loss_value(self, rng):
        theta = pv(1.0, 2.0, 3.0)
        val, grad = value_and_gradient(lambda v: (v["x"] * v["x"]).sum(), theta)
        assert val == pytest.approx(14.0)
        assert np.allclose(grad.values, [2.0, 4.0, 6.0])

    def test_eps_abs_documented_value(self):
        assert EPS_ABS == 1e-8
