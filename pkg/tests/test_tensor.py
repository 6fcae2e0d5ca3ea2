import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from paraformer import tensor as tt
from paraformer.errors import ContractError, NumericError, ShapeError
from paraformer.tensor import Tensor, Tape

RNG = np.random.default_rng(7)


def leaf(*shape, rng=RNG):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# ------------------------------------------------------------------ matmul

def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(tt.matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_row_by_column():
    out = tt.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_matches_triple_loop():
    a, b = RNG.standard_normal((4, 5)), RNG.standard_normal((5, 3))
    got = tt.matmul(Tensor(a), Tensor(b)).data
    want = np.array(oracles.matmul(a.tolist(), b.tolist()))
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        tt.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_matmul_associativity():
    a, b, c = (RNG.standard_normal(s) for s in [(3, 4), (4, 5), (5, 2)])
    left = tt.matmul(tt.matmul(Tensor(a), Tensor(b)), Tensor(c)).data
    right = tt.matmul(Tensor(a), tt.matmul(Tensor(b), Tensor(c))).data
    np.testing.assert_allclose(left, right, rtol=1e-9)


def test_only_bias_broadcasting_is_allowed():
    x = Tensor(np.ones((2, 3)))
    assert (x + Tensor(np.arange(3.0))).shape == (2, 3)
    with pytest.raises(ShapeError):
        x + Tensor(np.ones((2, 1)))
    with pytest.raises(ShapeError):
        x * Tensor(np.ones(3))


# ----------------------------------------------------------------- softmax

def test_softmax_uniform_and_stable():
    np.testing.assert_allclose(tt.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)
    out = tt.softmax(Tensor([1000.0, 0.0])).data
    assert abs(out[0] - 1.0) < 1e-12 and abs(out[1]) < 1e-12


def test_softmax_matches_extended_precision():
    row = RNG.standard_normal(8) * 3
    np.testing.assert_allclose(tt.softmax(Tensor(row)).data, oracles.softmax(row), atol=1e-12)


def test_softmax_nan_raises():
    with pytest.raises(NumericError):
        tt.softmax(Tensor([0.0, np.nan]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_rows_are_distributions(row):
    y = tt.softmax(Tensor(np.array([row, row[::-1]]))).data
    assert (y >= 0).all()
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)


# -------------------------------------------------------------- layer norm

def test_layer_norm_constant_row_collapses_to_beta():
    out = tt.layer_norm(Tensor([5.0, 5, 5, 5]), Tensor(np.ones(4)), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.data, np.zeros(4))


def test_layer_norm_two_points():
    out = tt.layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-15)
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-12)


def test_layer_norm_matches_row_oracle():
    x = RNG.standard_normal((3, 6))
    g, b = RNG.standard_normal(6), RNG.standard_normal(6)
    got = tt.layer_norm(Tensor(x), Tensor(g), Tensor(b)).data
    want = [oracles.layer_norm(r, g, b) for r in x]
    np.testing.assert_allclose(got, want, atol=1e-12)


# ----------------------------------------------------------------- backward

def test_sum_gives_ones():
    x = leaf(2, 3, 4)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_quadratic_gradient():
    x = Tensor([1.0, -2.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, -4.0])


def test_fan_out_accumulates():
    x = Tensor([3.0], requires_grad=True)
    y = x * x + x + x
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, [8.0])


def test_non_scalar_loss_rejected():
    with pytest.raises(ContractError):
        leaf(3).backward()


def test_tape_is_topological_and_unique():
    x = leaf(3)
    h = tt.tanh(x)
    y = (h * h + h).sum()
    tape = Tape.from_root(y)
    ids = [id(n) for n in tape]
    assert len(ids) == len(set(ids))
    pos = {id(n): i for i, n in enumerate(tape)}
    for n in tape:
        for p in n._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(n)]


def test_no_grad_records_nothing():
    x = leaf(3)
    with tt.no_grad():
        y = (x * x).sum()
    assert not y.requires_grad


def test_backward_is_deterministic():
    def run():
        rng = np.random.default_rng(3)
        w = leaf(4, 4, rng=rng)
        x = Tensor(rng.standard_normal((5, 4)))
        loss = tt.tanh(tt.matmul(x, w)).mean()
        loss.backward()
        return w.grad
    assert run().tobytes() == run().tobytes()


# each case maps leaves a [3,4], b [3,4], m [4,4], u [4], v [4] to a [3,4] output
OPS = {
    "add": lambda a, b, m, u, v: a + b,
    "bias": lambda a, b, m, u, v: a + u,
    "sub": lambda a, b, m, u, v: a - b,
    "mul": lambda a, b, m, u, v: a * b,
    "matmul": lambda a, b, m, u, v: tt.matmul(a, m),
    "linear": lambda a, b, m, u, v: tt.linear(a, m, v),
    "tanh": lambda a, b, m, u, v: tt.tanh(a) * b,
    "relu": lambda a, b, m, u, v: tt.relu(a) * b,
    "leaky_relu": lambda a, b, m, u, v: tt.leaky_relu(a) * b,
    "gelu": lambda a, b, m, u, v: tt.gelu(a) * b,
    "softmax": lambda a, b, m, u, v: tt.softmax(a) * b,
    "square": lambda a, b, m, u, v: tt.square(a) + b,
    "scale_div": lambda a, b, m, u, v: (a * 2.5) / 4.0 - b,
    "reshape_transpose": lambda a, b, m, u, v: a.reshape(4, 3).transpose(1, 0).reshape(3, 4) * b,
    "layer_norm": lambda a, b, m, u, v: tt.layer_norm(a, u, v),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(sum(map(ord, name)))
    # offset keeps relu/leaky_relu inputs away from the kink
    a = Tensor(rng.standard_normal((3, 4)) + 0.1, requires_grad=True)
    b, m, u, v = (Tensor(rng.standard_normal(s), requires_grad=True)
                  for s in [(3, 4), (4, 4), (4,), (4,)])
    weights = rng.standard_normal((3, 4))
    fn = lambda: (OPS[name](a, b, m, u, v) * Tensor(weights)).sum()  # noqa: E731
    assert tt.gradient_check(fn, [a, b, m, u, v]) < 1e-4


def test_batched_matmul_gradient():
    a, b = leaf(2, 3, 4), leaf(2, 4, 5)
    w = RNG.standard_normal((2, 3, 5))
    assert tt.gradient_check(lambda: (tt.matmul(a, b) * Tensor(w)).sum(), [a, b]) < 1e-4


def test_dropout_eval_is_identity_and_train_scales():
    x = Tensor(np.ones((200, 50)))
    assert tt.dropout(x, 0.5, None, train=False) is x
    y = tt.dropout(x, 0.5, np.random.default_rng(0), train=True).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05


def test_forward_values_stay_finite():
    x = Tensor(RNG.standard_normal((4, 6)) * 100)
    for f in (tt.tanh, tt.gelu, tt.relu, tt.softmax):
        assert np.isfinite(f(x).data).all()
