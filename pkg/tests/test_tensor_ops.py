"""Tensor engine: op contracts, tape semantics, gradient correctness."""

import numpy as np
import pytest

from clipcodec import ops
from clipcodec.errors import ShapeError, TapeError
from clipcodec.tensor import Tape, Tensor, precision
from conftest import fd_gradient, rel_error


def test_matmul_shape_contract():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((3, 4)))
    assert ops.matmul(a, b).shape == (2, 4)
    with pytest.raises(ShapeError, match="matmul"):
        ops.matmul(a, Tensor(np.ones((2, 4))))


def test_pixel_shuffle_shape():
    r = 2
    x = Tensor(np.arange(1 * 4 * r * r * 3 * 5, dtype=np.float32)
               .reshape(1, 4 * r * r, 3, 5))
    out = ops.pixel_shuffle(x, r)
    assert out.shape == (1, 4, 6, 10)
    # channel-major sub-pixel placement
    assert out.data[0, 0, 0, 0] == x.data[0, 0, 0, 0]
    assert out.data[0, 0, 0, 1] == x.data[0, 1, 0, 0]
    assert out.data[0, 0, 1, 0] == x.data[0, 2, 0, 0]


def test_pixel_shuffle_rejects_bad_channels():
    with pytest.raises(ShapeError):
        ops.pixel_shuffle(Tensor(np.ones((1, 5, 2, 2))), 2)


def test_mean_square_zero():
    assert ops.mean_square(Tensor(np.zeros((3, 4)))).item() == 0.0


def test_upsample_nearest_values():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    out = ops.upsample_nearest(x, 2)
    assert out.shape == (1, 1, 4, 4)
    assert np.array_equal(out.data[0, 0],
                          np.array([[1, 1, 2, 2], [1, 1, 2, 2],
                                    [3, 3, 4, 4], [3, 3, 4, 4]]))


def test_simple_gradient():
    x = Tensor(3.0, requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        loss = ops.mul(x, x)
    tape.backward(loss)
    assert x.grad == pytest.approx(6.0)


def test_unreachable_parameter_gets_no_gradient():
    x = Tensor(2.0, requires_grad=True, dtype=np.float64)
    w = Tensor(5.0, requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        loss = ops.mul(x, x)
    tape.backward(loss)
    assert w.grad is None  # callers treat missing gradients as zero


def test_linear_system_gradient_matches_fd():
    rng = np.random.default_rng(0)
    with precision("f64"):
        w = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
        x = ops.constant(rng.standard_normal((4, 4)))
        y = ops.constant(rng.standard_normal((4, 4)))

        def run():
            with Tape() as tape:
                loss = ops.mean_square(ops.sub(ops.matmul(ops.constant(
                    x.data), w), y))
            return loss, tape

        loss, tape = run()
        tape.backward(loss)
        analytic = w.grad.copy()
        numeric = fd_gradient(lambda: run()[0].item(), w.data, h=1e-4)
        assert rel_error(analytic, numeric) < 1e-4


def test_conv2d_gradients_match_fd():
    rng = np.random.default_rng(1)
    with precision("f64"):
        x0 = rng.standard_normal((1, 3, 5, 5))
        w = Tensor(rng.standard_normal((2, 3, 3, 3)) * 0.5,
                   requires_grad=True)
        b = Tensor(rng.standard_normal(2) * 0.1, requires_grad=True)

        def run():
            with Tape() as tape:
                out = ops.conv2d(ops.constant(x0), w, b)
                loss = ops.mean_square(out)
            return loss, tape

        loss, tape = run()
        tape.backward(loss)
        for tensor in (w, b):
            analytic = tensor.grad.copy()
            tensor.grad = None
            numeric = fd_gradient(lambda: run()[0].item(), tensor.data)
            assert rel_error(analytic, numeric) < 1e-6


@pytest.mark.parametrize("op_name", ["gelu", "sin", "sigmoid", "exp"])
def test_elementwise_gradients_match_fd(op_name):
    rng = np.random.default_rng(2)
    fn = ops.OPS[op_name]
    with precision("f64"):
        x = Tensor(rng.uniform(-2, 2, size=12), requires_grad=True)

        def run():
            with Tape() as tape:
                loss = ops.sum_all(fn(x))
            return loss, tape

        loss, tape = run()
        tape.backward(loss)
        analytic = x.grad.copy()
        numeric = fd_gradient(lambda: run()[0].item(), x.data)
        assert rel_error(analytic, numeric) < 1e-7


def test_div_and_broadcast_gradients():
    rng = np.random.default_rng(3)
    with precision("f64"):
        a = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
        s = Tensor(1.7, requires_grad=True)

        def run():
            with Tape() as tape:
                loss = ops.mean_square(ops.div(a, s))
            return loss, tape

        loss, tape = run()
        tape.backward(loss)
        for tensor in (a, s):
            analytic = np.asarray(tensor.grad).copy()
            tensor.grad = None
            numeric = fd_gradient(lambda: run()[0].item(),
                                  tensor.data.reshape(tensor.data.shape))
            assert rel_error(analytic, numeric) < 1e-7


def test_ste_round_forward_and_gradient():
    x = Tensor(np.array([0.6, -0.5, 0.4, 2.5]), requires_grad=True,
               dtype=np.float64)
    with Tape() as tape:
        out = ops.ste_round(x)
        loss = ops.sum_all(out)
    assert np.array_equal(out.data, [1.0, -1.0, 0.0, 3.0])
    tape.backward(loss)
    assert np.array_equal(x.grad, np.ones(4))  # identity pass-through


def test_tape_rejects_double_backward():
    x = Tensor(1.0, requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        loss = ops.mul(x, x)
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)


def test_tape_rejects_non_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        out = ops.mul(x, x)
    with pytest.raises(TapeError):
        tape.backward(out)


def test_tape_rejects_foreign_loss():
    x = Tensor(1.0, requires_grad=True, dtype=np.float64)
    with Tape():
        ops.mul(x, x)
    with Tape() as other:
        pass
    with pytest.raises(TapeError):
        other.backward(ops.mul(x, x))


def test_no_tape_means_no_recording():
    x = Tensor(2.0, requires_grad=True, dtype=np.float64)
    out = ops.mul(x, x)  # inference mode
    assert out.data == 4.0
    assert x.grad is None


def test_gradient_accumulates_across_shared_use():
    x = Tensor(2.0, requires_grad=True, dtype=np.float64)
    with Tape() as tape:
        loss = ops.add(ops.mul(x, x), ops.mul(x, ops.constant(3.0)))
    tape.backward(loss)
    assert x.grad == pytest.approx(7.0)  # 2x + 3


def test_apply_dispatch_and_unknown_kind():
    out = ops.apply("add", Tensor(1.0), Tensor(2.0))
    assert out.item() == 3.0
    with pytest.raises(ShapeError, match="unknown op"):
        ops.apply("definitely-not-an-op", Tensor(1.0))
