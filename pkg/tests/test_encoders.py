import math

import numpy as np
import pytest

from oracles import fd_gradient, grad_rel_error
from unirep.encoders import AdamState, Mlp, adam_step, params_checksum, reconstruction_loss
from unirep.errors import NumericalError, ShapeError
from unirep.tensors import DTYPE, SeededRng


def make_mlp(name="enc_a", d_in=4, d_hidden=6, d_out=3, seed=1):
    return Mlp(name, d_in, d_hidden, d_out, SeededRng(seed))


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        mlp = make_mlp()
        mlp.set_params({k: np.zeros_like(v) for k, v in mlp.params().items()})
        out = mlp.encode(SeededRng(2).uniform(-1, 1, (5, 4)))
        assert np.array_equal(out, np.zeros((5, 3), dtype=DTYPE))

    def test_scalar_arithmetic_oracle(self):
        # identity weights, zero bias: output = tanh(x) @ I
        mlp = make_mlp(d_in=2, d_hidden=2, d_out=2)
        eye = np.eye(2, dtype=DTYPE)
        zero = np.zeros(2, dtype=DTYPE)
        mlp.set_params({"w1": eye, "b1": zero, "w2": eye, "b2": zero})
        out = mlp.encode(np.array([[1.0, 0.0]], dtype=DTYPE))
        assert np.allclose(out, [[math.tanh(1.0), 0.0]], atol=1e-7)

    def test_repeat_call_bitwise_equal(self):
        mlp = make_mlp()
        x = SeededRng(3).uniform(-1, 1, (4, 2, 4))
        assert np.array_equal(mlp.encode(x), mlp.encode(x))

    def test_forward_is_pure(self):
        mlp = make_mlp()
        x = SeededRng(4).uniform(-1, 1, (3, 4))
        x_copy = x.copy()
        before = params_checksum(mlp.params())
        mlp.forward(x)
        assert np.array_equal(x, x_copy)
        assert params_checksum(mlp.params()) == before

    def test_batched_equals_per_sample(self):
        mlp = make_mlp()
        x = SeededRng(5).uniform(-1, 1, (3, 2, 4))
        full = mlp.encode(x)
        rows = np.stack([mlp.encode(x[i]) for i in range(3)])
        assert np.allclose(full, rows, atol=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            make_mlp().encode(np.zeros((2, 5), dtype=DTYPE))

    def test_param_count(self):
        mlp = make_mlp(d_in=7, d_hidden=9, d_out=5)
        assert mlp.param_count == 7 * 9 + 9 + 9 * 5 + 5


class TestBackward:
    def test_gradients_match_finite_differences(self):
        mlp = make_mlp().astype(np.float64)
        rng = SeededRng(6)
        x = rng.uniform(-1, 1, (5, 4)).astype(np.float64)
        probe = rng.uniform(-1, 1, (5, 3)).astype(np.float64)

        def loss_of_output(out):
            return float((out * probe).sum())

        out, cache = mlp.forward(x)
        d_x, grads = mlp.backward(cache, probe)

        num = fd_gradient(lambda v: loss_of_output(mlp.forward(v)[0]), x)
        assert grad_rel_error(d_x, num) < 1e-4

        for key in Mlp.LAYERS:
            def loss_of_param(p, key=key):
                trial = Mlp.from_params("t", {**mlp.params(), key: p})
                return loss_of_output(trial.forward(x)[0])

            num = fd_gradient(loss_of_param, mlp.params()[key])
            assert grad_rel_error(grads[key], num) < 1e-4, key


class TestReconstructionLoss:
    def test_perfect_reconstruction_zero_loss(self):
        dec = make_mlp("dec", d_in=3, d_hidden=5, d_out=4, seed=7)
        code = SeededRng(8).uniform(-1, 1, (6, 3))
        target = dec.encode(code)
        loss, d_code, grads = reconstruction_loss(dec, code, target)
        assert loss == 0.0
        assert np.allclose(d_code, 0.0)
        assert all(np.allclose(g, 0.0) for g in grads.values())

    def test_constant_offset_gives_unit_loss(self):
        dec = make_mlp("dec", d_in=3, d_hidden=5, d_out=4, seed=9)
        params = {k: np.zeros_like(v) for k, v in dec.params().items()}
        params["b2"] = np.full(4, 2.0, dtype=DTYPE)  # decoder always outputs 2
        dec.set_params(params)
        code = SeededRng(10).uniform(-1, 1, (5, 3))
        target = np.full((5, 4), 3.0, dtype=DTYPE)
        loss, _, _ = reconstruction_loss(dec, code, target)
        assert loss == pytest.approx(1.0, abs=1e-9)

    def test_shape_mismatch(self):
        dec = make_mlp("dec", d_in=3, d_hidden=5, d_out=4)
        with pytest.raises(ShapeError):
            reconstruction_loss(dec, np.zeros((2, 3), dtype=DTYPE), np.zeros((2, 5), dtype=DTYPE))

    def test_gradients_match_finite_differences(self):
        dec = make_mlp("dec", d_in=3, d_hidden=5, d_out=4, seed=11).astype(np.float64)
        rng = SeededRng(12)
        code = rng.uniform(-1, 1, (4, 3)).astype(np.float64)
        target = rng.uniform(-1, 1, (4, 4)).astype(np.float64)

        loss, d_code, grads = reconstruction_loss(dec, code, target)
        num = fd_gradient(lambda c: reconstruction_loss(dec, c, target)[0], code)
        assert grad_rel_error(d_code, num) < 1e-4

        for key in Mlp.LAYERS:
            def loss_of_param(p, key=key):
                trial = Mlp.from_params("t", {**dec.params(), key: p})
                return reconstruction_loss(trial, code, target)[0]

            num = fd_gradient(loss_of_param, dec.params()[key])
            assert grad_rel_error(grads[key], num) < 1e-4, key


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        params = {"w": np.array([1.0, -2.0], dtype=DTYPE)}
        state = AdamState.for_params(params)
        adam_step(state, params, {"w": np.zeros(2, dtype=DTYPE)})
        assert np.array_equal(params["w"], np.array([1.0, -2.0], dtype=DTYPE))
        assert state.step == 1

    def test_first_step_moves_by_lr_times_sign(self):
        # closed form: first update is lr * g / (|g| + eps) toward -sign(g)
        for g in (0.3, -0.002, 7.0):
            params = {"w": np.array([0.5], dtype=DTYPE)}
            state = AdamState.for_params(params, lr=1e-3)
            adam_step(state, params, {"w": np.array([g], dtype=DTYPE)})
            delta = float(params["w"][0]) - 0.5
            assert delta == pytest.approx(-1e-3 * np.sign(g), rel=1e-4)

    def test_two_equal_runs_identical_trajectories(self):
        def run():
            rng = SeededRng(13)
            params = {"w": rng.uniform(-1, 1, (3, 2))}
            state = AdamState.for_params(params)
            for _ in range(10):
                adam_step(state, params, {"w": rng.uniform(-1, 1, (3, 2))})
            return params["w"]

        assert np.array_equal(run(), run())

    def test_nan_gradient_names_parameter(self):
        params = {"enc_a.w1": np.ones(2, dtype=DTYPE)}
        state = AdamState.for_params(params)
        with pytest.raises(NumericalError, match="enc_a.w1"):
            adam_step(state, params, {"enc_a.w1": np.array([1.0, np.nan], dtype=DTYPE)})

    def test_moment_shape_congruence(self):
        params = {"w": np.zeros((2, 3), dtype=DTYPE), "b": np.zeros(3, dtype=DTYPE)}
        state = AdamState.for_params(params)
        assert all(state.m[k].shape == params[k].shape for k in params)
        assert all(state.v[k].shape == params[k].shape for k in params)


def test_checksum_changes_with_params():
    mlp = make_mlp()
    before = params_checksum(mlp.params())
    mlp.w1 = mlp.w1 + 1
    assert params_checksum(mlp.params()) != before
