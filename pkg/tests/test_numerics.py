import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bevfuse import numerics as nx
from bevfuse.numerics import Tensor, finite_difference_grad, relative_error


def grid22():
    return Tensor([[[1.0, 2.0], [3.0, 4.0]]])


class TestBilinear:
    def test_lattice_hit(self, f64):
        assert nx.bilinear_sample(grid22(), [(0, 0)]).data[0, 0] == 1.0

    def test_center_is_mean(self, f64):
        assert nx.bilinear_sample(grid22(), [(0.5, 0.5)]).data[0, 0] == pytest.approx(2.5)

    def test_zero_padding(self, f64):
        assert nx.bilinear_sample(grid22(), [(-1, -1)]).data[0, 0] == 0.0

    def test_x_is_column(self, f64):
        out = nx.bilinear_sample(grid22(), [(1, 0), (0, 1)]).data[0]
        np.testing.assert_array_equal(out, [2.0, 3.0])

    def test_empty_points(self, f64):
        assert nx.bilinear_sample(grid22(), []).shape == (1, 0)

    def test_non_finite_point_rejected(self, f64):
        with pytest.raises(ValueError):
            nx.bilinear_sample(grid22(), [(np.nan, 0.0)])

    def test_linear_between_lattice_points(self, f64, rng):
        g = Tensor(rng.normal(size=(3, 5, 6)))
        ts = np.linspace(0, 1, 7)
        pts = [(2 + t, 3.0) for t in ts]
        out = nx.bilinear_sample(g, pts).data
        expected = np.outer(g.data[:, 3, 2], 1 - ts) + np.outer(g.data[:, 3, 3], ts)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_matches_naive_loop(self, f64, rng):
        g = rng.normal(size=(2, 4, 5))
        pts = rng.uniform(-1.5, 5.5, size=(40, 2))
        out = nx.bilinear_sample(Tensor(g), pts).data
        for n, (x, y) in enumerate(pts):
            x0, y0 = math.floor(x), math.floor(y)
            acc = np.zeros(2)
            for dx in (0, 1):
                for dy in (0, 1):
                    xc, yc = x0 + dx, y0 + dy
                    w = (1 - abs(x - xc)) * (1 - abs(y - yc))
                    if 0 <= xc < 5 and 0 <= yc < 4:
                        acc += w * g[:, yc, xc]
            np.testing.assert_allclose(out[:, n], acc, atol=1e-12)

    def test_deterministic(self, f64, rng):
        g = Tensor(rng.normal(size=(3, 6, 6)))
        pts = rng.uniform(0, 5, size=(30, 2))
        a = nx.bilinear_sample(g, pts).data
        b = nx.bilinear_sample(g, pts).data
        assert a.tobytes() == b.tobytes()


class TestSoftmax:
    def test_uniform(self, f64):
        np.testing.assert_allclose(nx.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_closed_form(self, f64):
        np.testing.assert_allclose(nx.softmax(Tensor([math.log(3), 0.0])).data, [0.75, 0.25], atol=1e-15)

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=9), st.floats(-100, 100))
    @settings(max_examples=50, deadline=None)
    def test_shift_invariant_and_normalized(self, v, c):
        with nx.precision("float64"):
            a = nx.softmax(Tensor(v)).data
            b = nx.softmax(Tensor(np.array(v) + c)).data
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert abs(a.sum() - 1) <= 1e-12
        assert np.all(a > 0)


class TestLayerNorm:
    def test_constant_vector(self, f64):
        np.testing.assert_array_equal(nx.layer_norm(Tensor([2.0, 2.0, 2.0])).data, [0, 0, 0])

    def test_already_standard(self, f64):
        np.testing.assert_allclose(nx.layer_norm(Tensor([1.0, -1.0])).data, [1.0, -1.0], atol=1e-8)

    def test_random_statistics(self, f64, rng):
        for _ in range(20):
            out = nx.layer_norm(Tensor(rng.normal(3, 5, size=17))).data
            assert abs(out.mean()) <= 1e-9
            assert abs(out.var() - 1) <= 1e-6


class TestFiniteDifference:
    def test_square(self, f64):
        g = finite_difference_grad(lambda x: x * x, Tensor([3.0]), eps=1e-5)
        assert g[0] == pytest.approx(6.0, abs=1e-6)

    def test_sum_is_ones(self, f64, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        np.testing.assert_allclose(finite_difference_grad(lambda t: t.sum(), x), np.ones((3, 4)), atol=1e-8)

    def test_non_finite_raises(self, f64):
        with pytest.raises(FloatingPointError):
            finite_difference_grad(lambda t: (t * 0.0).log(), Tensor([1.0]))

    def test_bad_eps(self, f64):
        with pytest.raises(ValueError):
            finite_difference_grad(lambda t: t.sum(), Tensor([1.0]), eps=0)


def _ops(rng):
    """(name, builder) pairs: builder(shape) -> (inputs, fn)."""

    def unary(fn, positive=False):
        def build(shape):
            x = rng.normal(size=shape)
            if positive:
                x = np.abs(x) + 0.5
            return [x], lambda a: fn(a)

        return build

    def binary(fn, positive=False):
        def build(shape):
            a = rng.normal(size=shape)
            b = rng.normal(size=shape[-1:])
            if positive:
                b = np.abs(b) + 0.5
            return [a, b], fn

        return build

    def matmul(shape):
        a = rng.normal(size=shape)
        b = rng.normal(size=(shape[-1], 3))
        return [a, b], lambda x, y: x @ y

    def bilinear(shape):
        C = shape[0]
        g = rng.normal(size=(C, 4, 5))
        p = rng.uniform(-0.8, 4.8, size=(6, 2))
        p = np.where(np.abs(p - np.round(p)) < 0.05, p + 0.1, p)
        return [g, p], lambda a, b: nx.bilinear_sample(a, b)

    def grouped(shape):
        v = rng.normal(size=(2, shape[-1], 3, 4))
        p = rng.uniform(-0.8, 3.8, size=(2, 5, 2))
        p = np.where(np.abs(p - np.round(p)) < 0.05, p + 0.1, p)
        return [v, p], lambda a, b: nx.grouped_bilinear_sample(a, b)

    def ln_affine(shape):
        x = rng.normal(size=shape)
        gain = rng.normal(size=shape[-1:])
        bias = rng.normal(size=shape[-1:])
        return [x, gain, bias], lambda a, g, b: nx.layer_norm(a, g, b)

    def bce(shape):
        x = rng.normal(size=shape)
        t = (rng.uniform(size=shape) > 0.5).astype(float)
        return [x], lambda a: nx.bce_with_logits(a, t)

    def getitem(shape):
        x = rng.normal(size=shape)
        idx = rng.integers(0, shape[0], size=5)
        return [x], lambda a: a[idx]

    def concat(shape):
        a = rng.normal(size=shape)
        b = rng.normal(size=shape)
        return [a, b], lambda x, y: nx.concat([x, y * 2.0], axis=-1)

    def index_add(shape):
        base = rng.normal(size=shape)
        vals = rng.normal(size=(4,) + shape[1:])
        rows = rng.integers(0, shape[0], size=4)
        return [base, vals], lambda b, v: nx.index_add(b, rows, v)

    def take_along(shape):
        x = rng.normal(size=shape)
        idx = np.argsort(-x, axis=-1)[..., :2]
        return [x], lambda a: nx.take_along_last(a, idx)

    return [
        ("add", binary(lambda a, b: a + b)),
        ("sub", binary(lambda a, b: a - b)),
        ("mul", binary(lambda a, b: a * b)),
        ("div", binary(lambda a, b: a / b, positive=True)),
        ("pow", unary(lambda a: a**3)),
        ("exp", unary(lambda a: a.exp())),
        ("log", unary(lambda a: a.log(), positive=True)),
        ("tanh", unary(lambda a: a.tanh())),
        ("sigmoid", unary(lambda a: a.sigmoid())),
        ("softplus", unary(lambda a: a.softplus())),
        ("gelu", unary(nx.gelu)),
        ("softmax", unary(lambda a: nx.softmax(a, axis=-1))),
        ("layer_norm", ln_affine),
        ("sum_axis", unary(lambda a: a.sum(axis=0))),
        ("mean", unary(lambda a: a.mean(axis=-1, keepdims=True))),
        ("transpose", unary(lambda a: a.transpose())),
        ("reshape", unary(lambda a: a.reshape(-1))),
        ("matmul", matmul),
        ("bilinear", bilinear),
        ("grouped_bilinear", grouped),
        ("bce", bce),
        ("getitem", getitem),
        ("concat", concat),
        ("index_add", index_add),
        ("take_along", take_along),
    ]


SHAPES = [(3, 4), (2, 5), (4, 3), (5, 2), (3, 3)]


@pytest.mark.parametrize("name_idx", range(25))
def test_reverse_mode_matches_finite_differences(f64, name_idx):
    """Each op against central differences on several random shapes (25 ops x 5 shapes)."""
    rng = np.random.default_rng(100 + name_idx)
    name, build = _ops(rng)[name_idx]
    for shape in SHAPES:
        arrays, fn = build(shape)
        inputs = [Tensor(a, requires_grad=True) for a in arrays]
        weights = rng.normal(size=fn(*inputs).shape)

        def loss():
            return (fn(*inputs) * weights).sum()

        loss().backward()
        for x in inputs:
            numeric = finite_difference_grad(lambda _: loss(), x, eps=1e-6)
            err = relative_error(x.grad, numeric, floor=1e-5)
            assert err <= 1e-4, f"{name} {shape}: rel err {err}"


def test_linear_init_is_seeded_and_bounded(f64):
    a = nx.Linear(16, 4, np.random.default_rng(7))
    b = nx.Linear(16, 4, np.random.default_rng(7))
    assert a.weight.data.tobytes() == b.weight.data.tobytes()
    assert np.all(np.abs(a.weight.data) <= 0.25)


def test_gradient_accumulates_over_shared_use(f64):
    x = Tensor([2.0], requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad[0] == pytest.approx(5.0)


def test_no_grad_builds_no_graph(f64):
    x = Tensor([2.0], requires_grad=True)
    with nx.no_grad():
        y = x * 3.0
    assert not y.requires_grad
