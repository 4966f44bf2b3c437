import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import log_softmax_naive, matmul_loops
from unirep.errors import DataError, NumericalError, ShapeError
from unirep.tensors import (
    DTYPE,
    SeededRng,
    derive_seed,
    ensure_finite,
    load_tensor,
    log_softmax,
    log_sum_exp,
    matmul,
    save_tensor,
    softmax,
    thread_cap,
)


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.5, -2.0], [0.25, 4.0]], dtype=DTYPE)
        assert np.array_equal(matmul(np.eye(2, dtype=DTYPE), a), a)

    def test_hand_case(self):
        a = np.array([[1, 2], [3, 4]], dtype=DTYPE)
        b = np.array([[0], [1]], dtype=DTYPE)
        assert np.array_equal(matmul(a, b), np.array([[2], [4]], dtype=DTYPE))

    def test_matches_triple_loop_oracle(self):
        rng = SeededRng(5)
        a = rng.uniform(-2, 2, (5, 7))
        b = rng.uniform(-2, 2, (7, 3))
        assert np.allclose(matmul(a, b), matmul_loops(a, b), atol=1e-6)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(5, 7\).*\(3, 2\)"):
            matmul(np.zeros((5, 7), dtype=DTYPE), np.zeros((3, 2), dtype=DTYPE))

    def test_rank_checked(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros(3, dtype=DTYPE), np.zeros((3, 2), dtype=DTYPE))

    def test_associativity(self):
        rng = SeededRng(6)
        a = rng.uniform(-1, 1, (4, 5))
        b = rng.uniform(-1, 1, (5, 6))
        c = rng.uniform(-1, 1, (6, 3))
        assert np.allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-5)

    def test_float64_operands_stay_float64(self):
        out = matmul(np.ones((2, 2)), np.ones((2, 2)))
        assert out.dtype == np.float64


class TestLogSoftmax:
    def test_uniform_vector(self):
        out = log_softmax(np.zeros(4, dtype=DTYPE))
        assert np.allclose(out, math.log(0.25), atol=1e-7)

    def test_extreme_values_no_overflow(self):
        out = log_softmax(np.array([0.0, 1000.0], dtype=DTYPE))
        assert np.all(np.isfinite(out))
        assert np.allclose(out, [-1000.0, 0.0])

    def test_matches_naive_oracle(self):
        v = SeededRng(7).uniform(-3, 3, (8,))
        assert np.allclose(log_softmax(v), log_softmax_naive(v), atol=1e-6)

    def test_exp_sums_to_one(self):
        v = SeededRng(8).uniform(-5, 5, (3, 6))
        sums = np.exp(log_softmax(v, axis=1)).sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-6)

    def test_invalid_axis(self):
        with pytest.raises(ShapeError):
            log_softmax(np.zeros((2, 2), dtype=DTYPE), axis=2)

    @settings(max_examples=50, deadline=None)
    @given(
        v=st.lists(st.floats(-20, 20), min_size=2, max_size=8),
        c=st.floats(-50, 50),
    )
    def test_shift_invariance(self, v, c):
        v = np.array(v, dtype=np.float64)
        assert np.allclose(log_softmax(v + c), log_softmax(v), atol=1e-6)

    def test_softmax_and_lse_consistent(self):
        v = SeededRng(9).uniform(-2, 2, (5,))
        assert np.allclose(softmax(v).sum(), 1.0, atol=1e-6)
        assert np.isclose(log_sum_exp(v), math.log(np.exp(v.astype(np.float64)).sum()))


class TestSeededRng:
    def test_equal_seeds_equal_streams(self):
        a = SeededRng(1234).random(10_000)
        b = SeededRng(1234).random(10_000)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(SeededRng(1).random(100), SeededRng(2).random(100))

    def test_uniform_bounds(self):
        u = SeededRng(3).uniform(-2.0, 5.0, (1000,))
        assert u.dtype == DTYPE
        assert u.min() >= -2.0 and u.max() < 5.0

    def test_normal_moments(self):
        z = SeededRng(4).normal((20_000,))
        assert abs(z.mean()) < 0.05
        assert abs(z.std() - 1.0) < 0.05

    def test_randint_covers_range(self):
        draws = {SeededRng(5).spawn(i).randint(4) for i in range(200)}
        assert draws == {0, 1, 2, 3}

    def test_permutation_is_permutation(self):
        p = SeededRng(6).permutation(17)
        assert sorted(p.tolist()) == list(range(17))

    def test_choice_without_replacement_distinct(self):
        picks = SeededRng(7).choice(10, 6)
        assert len(set(picks.tolist())) == 6

    def test_spawn_independent_of_draw_position(self):
        parent1 = SeededRng(42)
        parent2 = SeededRng(42)
        parent2.random(100)  # advance one parent
        assert np.array_equal(parent1.spawn("x").random(10), parent2.spawn("x").random(10))

    def test_derive_seed_stable(self):
        assert derive_seed(9, "a", 1) == derive_seed(9, "a", 1)
        assert derive_seed(9, "a", 1) != derive_seed(9, "a", 2)

    def test_call_sequence_determinism(self):
        def trace(rng):
            return (rng.randint(10), tuple(rng.random(3).tolist()), rng.normal(), rng.next_u64())

        assert trace(SeededRng(77)) == trace(SeededRng(77))


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        arr = SeededRng(10).uniform(-1, 1, (3, 4, 5))
        base = tmp_path / "tensor"
        save_tensor(base, arr)
        out = load_tensor(base)
        assert out.dtype == DTYPE
        assert np.array_equal(out, arr)

    def test_sidecar_and_little_endian_payload(self, tmp_path):
        arr = np.array([[1.0, -2.5]], dtype=DTYPE)
        base = tmp_path / "t"
        save_tensor(base, arr)
        meta = json.loads((tmp_path / "t.json").read_text())
        assert meta == {"dtype": "float32", "shape": [1, 2]}
        raw = (tmp_path / "t.bin").read_bytes()
        assert struct.unpack("<2f", raw) == (1.0, -2.5)

    def test_size_mismatch_rejected(self, tmp_path):
        base = tmp_path / "t"
        save_tensor(base, np.zeros((2, 2), dtype=DTYPE))
        (tmp_path / "t.json").write_text(json.dumps({"dtype": "float32", "shape": [3, 3]}))
        with pytest.raises(DataError):
            load_tensor(base)


def test_ensure_finite():
    ensure_finite("ok", np.ones(3))
    with pytest.raises(NumericalError, match="bad_term"):
        ensure_finite("bad_term", np.array([1.0, np.nan]))


def test_thread_cap(monkeypatch):
    monkeypatch.delenv("UNIREP_THREADS", raising=False)
    assert thread_cap(1) == 1
    monkeypatch.setenv("UNIREP_THREADS", "4")
    assert thread_cap(1) == 4
    monkeypatch.setenv("UNIREP_THREADS", "oops")
    assert thread_cap(2) == 2
