"""Dense numeric substrate: float32 storage, float64 accumulation, seeded RNG.

numpy ndarrays (row-major, rank 2/3) carry all values. This module pins down
the numerics everything else relies on: explicit shape checks at public
boundaries (mismatches fail loudly, nothing broadcasts silently), matrix
products accumulated in 64-bit and narrowed back to 32-bit storage,
max-shifted log-softmax, a counter-based PRNG with identical output on every
platform, and the raw-little-endian + JSON-sidecar serialization format used
by every checkpoint and dataset dump.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .errors import DataError, NumericalError, ShapeError

DTYPE = np.float32

_MASK64 = 0xFFFFFFFFFFFFFFFF
_WEYL = 0x9E3779B97F4A7C15


def _mix64_array(x: np.ndarray) -> np.ndarray:
    """SplitMix64 output mix on a uint64 array (wraparound arithmetic)."""
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def derive_seed(seed: int, *tags) -> int:
    """Stable 64-bit sub-seed from a parent seed and a tag path.

    Uses BLAKE2b so string tags hash identically across platforms and runs
    (unlike the salted builtin hash).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed & _MASK64).to_bytes(8, "little"))
    for tag in tags:
        h.update(str(tag).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


class SeededRng:
    """Deterministic counter-based generator (SplitMix64 stream).

    Identical seed + identical call sequence gives identical outputs on
    every platform; the state is a plain 64-bit counter so draws can be
    produced in vectorized blocks without changing the stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._state = self.seed

    def _block(self, n: int) -> np.ndarray:
        offsets = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_WEYL)
        out = _mix64_array(np.uint64(self._state) + offsets)
        self._state = (self._state + _WEYL * n) & _MASK64
        return out

    def next_u64(self) -> int:
        return int(self._block(1)[0])

    def random(self, size=None):
        """float64 uniforms in [0, 1)."""
        if size is None:
            return float(self._block(1)[0] >> np.uint64(11)) * 2.0 ** -53
        n = int(np.prod(size))
        u = (self._block(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return u.reshape(size)

    def uniform(self, low: float, high: float, size, dtype=DTYPE) -> np.ndarray:
        return (low + self.random(size) * (high - low)).astype(dtype)

    def normal(self, size=None, loc=0.0, scale=1.0):
        """Box-Muller normals, computed in float64."""
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        u1 = self.random(n)
        u2 = self.random(n)
        # 1 - u1 keeps the log argument in (0, 1], never 0
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        out = loc + scale * z
        return float(out[0]) if scalar else out.reshape(size)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Bias is negligible for n << 2**53."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return min(int(self.random() * n), n - 1)

    def integers(self, n: int, size) -> np.ndarray:
        count = int(np.prod(size))
        vals = np.minimum((self.random(count) * n).astype(np.int64), n - 1)
        return vals.reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of arange(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, n: int, k: int, replace: bool = False) -> np.ndarray:
        if replace:
            return self.integers(n, k)
        if k > n:
            raise ValueError(f"cannot draw {k} from {n} without replacement")
        return self.permutation(n)[:k]

    def spawn(self, *tags) -> "SeededRng":
        """Independent child stream keyed by the ORIGINAL seed and tags."""
        return SeededRng(derive_seed(self.seed, *tags))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation.

    Result narrows to float32 only when both operands are float32; float64
    operands stay float64 (finite-difference checks rely on this).
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a.astype(np.float64, copy=False) @ b.astype(np.float64, copy=False)
    if a.dtype == DTYPE and b.dtype == DTYPE:
        return out.astype(DTYPE)
    return out


def log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted log-softmax; exp of the result sums to 1 along axis."""
    if not -v.ndim <= axis < v.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {v.shape}")
    x = v.astype(np.float64, copy=False)
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    return out.astype(v.dtype) if v.dtype == DTYPE else out


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    out = np.exp(log_softmax(v.astype(np.float64, copy=False), axis=axis))
    return out.astype(v.dtype) if v.dtype == DTYPE else out


def log_sum_exp(v: np.ndarray, axis: int = -1):
    x = v.astype(np.float64, copy=False)
    m = x.max(axis=axis)
    return m + np.log(np.exp(x - np.expand_dims(m, axis)).sum(axis=axis))


def ensure_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {name}")
    return arr


def save_tensor(basepath, arr: np.ndarray) -> None:
    """Write arr as <basepath>.bin (raw little-endian f32, row-major) plus a
    <basepath>.json sidecar {dtype, shape}."""
    arr = np.ascontiguousarray(arr, dtype=DTYPE)
    meta = {"dtype": "float32", "shape": list(arr.shape)}
    with open(f"{basepath}.json", "w") as fh:
        json.dump(meta, fh)
    with open(f"{basepath}.bin", "wb") as fh:
        fh.write(arr.astype("<f4").tobytes(order="C"))


def load_tensor(basepath) -> np.ndarray:
    with open(f"{basepath}.json") as fh:
        meta = json.load(fh)
    if meta.get("dtype") != "float32":
        raise DataError(f"unsupported tensor dtype in {basepath}.json: {meta.get('dtype')}")
    shape = tuple(int(s) for s in meta["shape"])
    raw = np.fromfile(f"{basepath}.bin", dtype="<f4")
    expected = int(np.prod(shape)) if shape else 1
    if raw.size != expected:
        raise DataError(
            f"{basepath}.bin holds {raw.size} values, sidecar shape {list(shape)} needs {expected}"
        )
    return raw.astype(DTYPE).reshape(shape)


def thread_cap(default: int = 1) -> int:
    """Worker-thread cap from UNIREP_THREADS (>=1)."""
    raw = os.environ.get("UNIREP_THREADS", "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default
