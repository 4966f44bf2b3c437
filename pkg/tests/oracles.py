"""Independent brute-force oracles the tests check the implementation against.

Everything here is deliberately naive (explicit loops, 64-bit arithmetic)
and stays independent of the code paths it verifies.
"""

import math

import numpy as np


def matmul_loops(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += float(a[i, p]) * float(b[p, j])
            out[i, j] = acc
    return out


def log_softmax_naive(v):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v)
    return np.log(e / e.sum())


def fine_loss_loops(masked, reference, tau):
    """Per-(sample, timestep) contrast, negatives = the sample's other timesteps."""
    n, t, _ = masked.shape
    total = 0.0
    for i in range(n):
        for j in range(t):
            num = math.exp(float(np.dot(masked[i, j].astype(np.float64),
                                        reference[i, j].astype(np.float64))) / tau)
            den = 0.0
            for k in range(t):
                den += math.exp(float(np.dot(masked[i, j].astype(np.float64),
                                             reference[i, k].astype(np.float64))) / tau)
            total -= math.log(num / den)
    return total / (n * t)


def coarse_loss_loops(masked, reference, tau):
    """Per-sample contrast, negatives = the other samples."""
    n = masked.shape[0]
    total = 0.0
    for i in range(n):
        num = math.exp(float(np.dot(masked[i].astype(np.float64),
                                    reference[i].astype(np.float64))) / tau)
        den = 0.0
        for j in range(n):
            den += math.exp(float(np.dot(masked[i].astype(np.float64),
                                         reference[j].astype(np.float64))) / tau)
        total -= math.log(num / den)
    return total / n


def quantize_scan(codewords, vectors):
    """Exhaustive nearest-codeword scan; ties keep the lowest index."""
    indices = []
    for v in vectors:
        best, best_d = 0, None
        for j, e in enumerate(codewords):
            d = float(((v.astype(np.float64) - e.astype(np.float64)) ** 2).sum())
            if best_d is None or d < best_d:
                best, best_d = j, d
        indices.append(best)
    return np.array(indices, dtype=np.int64)


def fd_gradient(fn, x, step=1e-3):
    """Central finite differences of a scalar function, element by element."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def grad_rel_error(analytic, numeric):
    """Max-norm relative disagreement between two gradients."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / scale)
