"""Operation-level checks: hand values, finite differences, shape errors."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimodal import ops
from trimodal.gradcheck import grad_check
from trimodal.tape import ParameterStore, ShapeError, Tape, Tensor


def weighted_sum_closure(build, store, weight_shape, seed=0):
    """loss = sum(R * build(tape)) with fixed random R; exercises the full
    Jacobian of the op under test."""
    r = np.random.default_rng(seed).uniform(-1, 1, weight_shape)

    def f(tape):
        out = build(tape)
        return ops.total(tape, ops.mul(tape, out, Tensor(r)))

    return f


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 0.0], [0.0, 1.0]])
        b = Tensor([[3.0], [4.0]])
        assert np.array_equal(ops.matmul(None, a, b).data, [[3.0], [4.0]])

    def test_hand_arithmetic(self):
        out = ops.matmul(None, Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert np.array_equal(out.data, [[11.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            ops.matmul(None, Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_gradient_of_sum_matches_finite_differences(self, rng):
        store = ParameterStore()
        a = store.add("a", rng.uniform(-1, 1, (3, 4)))
        b = store.add("b", rng.uniform(-1, 1, (4, 2)))

        def f(tape):
            return ops.total(tape, ops.matmul(tape, a, b))

        assert grad_check(f, store, step=1e-5) < 1e-6

    def test_associativity(self, rng):
        a, b, c = (rng.uniform(-1, 1, (3, 3)) for _ in range(3))
        left = ops.matmul(None, ops.matmul(None, Tensor(a), Tensor(b)), Tensor(c))
        right = ops.matmul(None, Tensor(a), ops.matmul(None, Tensor(b), Tensor(c)))
        np.testing.assert_allclose(left.data, right.data, atol=1e-9)


class TestSoftmax:
    def test_uniform_on_constant_input(self):
        out = ops.softmax(None, Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_analytic_two_point(self):
        out = ops.softmax(None, Tensor([math.log(2.0), 0.0]))
        np.testing.assert_allclose(out.data, [2 / 3, 1 / 3], atol=1e-15)

    def test_jacobian_matches_finite_differences(self, rng):
        store = ParameterStore()
        x = store.add("x", rng.uniform(-1, 1, 5))
        f = weighted_sum_closure(lambda tape: ops.softmax(tape, x, scale=1.7),
                                 store, 5)
        assert grad_check(f, store, step=1e-5) < 1e-6

    def test_scale_equals_softmax_of_scaled_logits(self, rng):
        x = rng.uniform(-2, 2, 7)
        scaled = ops.softmax(None, Tensor(x), scale=math.sqrt(4.0))
        plain = ops.softmax(None, Tensor(x / math.sqrt(4.0)))
        np.testing.assert_array_equal(scaled.data, plain.data)
        # d_k = 1: the scale is the identity
        np.testing.assert_array_equal(
            ops.softmax(None, Tensor(x), scale=1.0).data,
            ops.softmax(None, Tensor(x)).data)

    def test_rowwise_on_matrices(self, rng):
        x = rng.uniform(-3, 3, (4, 5))
        out = ops.softmax(None, Tensor(x))
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(4), atol=1e-12)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            ops.softmax(None, Tensor([1.0, 2.0]), scale=0.0)

    def test_no_overflow_on_huge_inputs(self):
        out = ops.softmax(None, Tensor([1000.0, 0.0, -1000.0]))
        assert np.all(np.isfinite(out.data))
        assert abs(out.data.sum() - 1.0) < 1e-12

    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=8),
           st.floats(min_value=-20, max_value=20))
    @settings(max_examples=60, deadline=None)
    def test_simplex_and_shift_invariance(self, values, shift):
        x = np.array(values)
        y = ops.softmax(None, Tensor(x)).data
        assert np.all(y > 0)
        assert abs(y.sum() - 1.0) < 1e-12
        y_shifted = ops.softmax(None, Tensor(x + shift)).data
        np.testing.assert_allclose(y_shifted, y, atol=1e-12)


class TestCrossEntropy:
    def test_uniform_four_classes(self):
        for label in range(4):
            loss = ops.cross_entropy(None, Tensor([0.25] * 4), label)
            assert abs(loss.item() - math.log(4.0)) < 1e-12

    def test_certain_prediction_is_zero_loss(self):
        loss = ops.cross_entropy(None, Tensor([1.0, 0.0, 0.0]), 0)
        assert abs(loss.item()) < 1e-9

    def test_floor_prevents_infinite_loss(self):
        loss = ops.cross_entropy(None, Tensor([0.0, 1.0]), 0)
        assert np.isfinite(loss.item())
        assert abs(loss.item() - (-math.log(1e-12))) < 1e-9

    def test_invalid_label_rejected(self):
        with pytest.raises(ValueError, match="label 3"):
            ops.cross_entropy(None, Tensor([0.5, 0.5, 0.0]), 3)
        with pytest.raises(ValueError):
            ops.mean_cross_entropy(None, Tensor([[0.5, 0.5]]), [2])

    def test_logit_gradient_is_probs_minus_onehot(self, rng):
        # softmax + cross-entropy: d loss / d logits == probs - onehot
        logits_val = rng.uniform(-1, 1, 6)
        label = 2
        store = ParameterStore()
        logits = store.add("logits", logits_val)

        tape = Tape()
        probs = ops.softmax(tape, logits)
        loss = ops.cross_entropy(tape, probs, label)
        tape.backward(loss)
        onehot = np.eye(6)[label]
        np.testing.assert_allclose(tape.grad(logits), probs.data - onehot, atol=1e-12)

        def f(tape):
            return ops.cross_entropy(tape, ops.softmax(tape, logits), label)

        assert grad_check(f, store, step=1e-5) < 1e-6

    def test_mean_cross_entropy_matches_single(self, rng):
        probs = rng.dirichlet(np.ones(4), size=3)
        labels = [0, 3, 1]
        batched = ops.mean_cross_entropy(None, Tensor(probs), labels)
        singles = [ops.cross_entropy(None, Tensor(p), y).item()
                   for p, y in zip(probs, labels)]
        assert abs(batched.item() - np.mean(singles)) < 1e-12


@pytest.mark.parametrize("name,shapes,build", [
    ("add", [(3, 4), (3, 4)],
     lambda tape, a, b: ops.add(tape, a, b)),
    ("add_row", [(3, 4), (4,)],
     lambda tape, a, b: ops.add_row(tape, a, b)),
    ("mul", [(3, 4), (3, 4)],
     lambda tape, a, b: ops.mul(tape, a, b)),
    ("colmul", [(3, 4), (3, 1)],
     lambda tape, a, b: ops.colmul(tape, a, b)),
    ("rowdot", [(3, 4), (3, 4)],
     lambda tape, a, b: ops.rowdot(tape, a, b)),
    ("concat0", [(2, 4), (3, 4)],
     lambda tape, a, b: ops.concat(tape, [a, b], axis=0)),
    ("concat1", [(3, 2), (3, 4)],
     lambda tape, a, b: ops.concat(tape, [a, b], axis=1)),
    ("sigmoid", [(3, 4)],
     lambda tape, a: ops.sigmoid(tape, a)),
    ("tanh", [(3, 4)],
     lambda tape, a: ops.tanh(tape, a)),
    ("col", [(3, 4)],
     lambda tape, a: ops.col(tape, a, 2)),
    ("row", [(3, 4)],
     lambda tape, a: ops.row(tape, a, 1)),
    ("stack_rows", [(4,), (4,), (4,)],
     lambda tape, *rows_: ops.stack_rows(tape, rows_)),
])
def test_elementwise_and_structural_gradients(name, shapes, build, rng):
    store = ParameterStore()
    params = [store.add(f"p{i}", rng.uniform(-1, 1, shape))
              for i, shape in enumerate(shapes)]
    out_shape = build(None, *params).data.shape
    f = weighted_sum_closure(lambda tape: build(tape, *params), store, out_shape)
    assert grad_check(f, store, step=1e-5) < 1e-6


def test_forward_outputs_finite_on_finite_inputs(rng):
    x = Tensor(rng.uniform(-100, 100, (5, 6)))
    for op in (lambda: ops.sigmoid(None, x),
               lambda: ops.tanh(None, x),
               lambda: ops.softmax(None, x)):
        assert np.all(np.isfinite(op().data))


def test_dropout_identity_at_zero_rate(rng):
    x = Tensor(rng.uniform(-1, 1, (3, 4)))
    assert ops.dropout(None, x, 0.0, rng) is x
    dropped = ops.dropout(None, x, 0.5, np.random.default_rng(0))
    kept = dropped.data != 0
    np.testing.assert_allclose(dropped.data[kept], x.data[kept] * 2.0)
