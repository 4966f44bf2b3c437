"""Per-modality projectors and their hand-derived gradients.

Each modality gets a two-layer perceptron applied independently at every
timestep (no temporal mixing), mapping backbone features into the shared
latent width, plus a mirror-image decoder mapping quantized latents back to
the input space. Backward passes are written out explicitly; the Adam
updater and reconstruction loss live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError
from .tensors import DTYPE, SeededRng, matmul


class Mlp:
    """Two-layer perceptron with tanh hidden activation, applied row-wise.

    Used both as the per-modality encoder (d_in -> d_out = latent width) and
    as the reconstruction decoder (latent width -> d_out = d_in). ``forward``
    is pure: the activation cache it returns is the only state it produces.
    """

    LAYERS = ("w1", "b1", "w2", "b2")

    def __init__(self, name: str, d_in: int, d_hidden: int, d_out: int, rng: SeededRng):
        self.name = name
        self.d_in = d_in
        self.d_hidden = d_hidden
        self.d_out = d_out
        b1 = 1.0 / np.sqrt(d_in)
        b2 = 1.0 / np.sqrt(d_hidden)
        self.w1 = rng.uniform(-b1, b1, (d_in, d_hidden))
        self.b1 = rng.uniform(-b1, b1, (d_hidden,))
        self.w2 = rng.uniform(-b2, b2, (d_hidden, d_out))
        self.b2 = rng.uniform(-b2, b2, (d_out,))

    @property
    def param_count(self) -> int:
        return self.d_in * self.d_hidden + self.d_hidden + self.d_hidden * self.d_out + self.d_out

    def params(self) -> dict:
        return {k: getattr(self, k) for k in self.LAYERS}

    def set_params(self, params: dict) -> None:
        for k in self.LAYERS:
            setattr(self, k, params[k])

    @classmethod
    def from_params(cls, name: str, params: dict) -> "Mlp":
        obj = cls.__new__(cls)
        obj.name = name
        obj.w1, obj.b1, obj.w2, obj.b2 = (params[k] for k in cls.LAYERS)
        obj.d_in, obj.d_hidden = obj.w1.shape
        obj.d_out = obj.w2.shape[1]
        return obj

    def astype(self, dtype) -> "Mlp":
        return Mlp.from_params(self.name, {k: getattr(self, k).astype(dtype) for k in self.LAYERS})

    def forward(self, x: np.ndarray):
        """Returns (output, cache); output shape = x.shape[:-1] + (d_out,)."""
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"{self.name}: input {x.shape} does not end in d_in={self.d_in}")
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.d_in)
        hidden = np.tanh(matmul(flat, self.w1) + self.b1)
        out = matmul(hidden, self.w2) + self.b2
        return out.reshape(*lead, self.d_out), (flat, hidden, lead)

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, d_out: np.ndarray):
        """Gradient of a scalar loss wrt input and parameters.

        d_out carries dLoss/dOutput with the same shape the forward output
        had; returns (d_x, grads dict keyed like params()).
        """
        flat, hidden, lead = cache
        d2 = d_out.reshape(-1, self.d_out)
        if d2.shape[0] != flat.shape[0]:
            raise ShapeError(f"{self.name}: gradient rows {d2.shape} vs cached {flat.shape}")
        grads = {}
        grads["w2"] = matmul(hidden.T, d2)
        grads["b2"] = d2.sum(axis=0, dtype=np.float64).astype(d2.dtype)
        d_hidden = matmul(d2, self.w2.T) * (1.0 - hidden * hidden)
        grads["w1"] = matmul(flat.T, d_hidden)
        grads["b1"] = d_hidden.sum(axis=0, dtype=np.float64).astype(d2.dtype)
        d_x = matmul(d_hidden, self.w1.T).reshape(*lead, self.d_in)
        return d_x, grads


def reconstruction_loss(decoder: Mlp, code: np.ndarray, target: np.ndarray):
    """Mean squared error between decoder(code) and target.

    Returns (loss, d_code, decoder grads). The gradient wrt code is what the
    straight-through path routes back to the encoder.
    """
    recon, cache = decoder.forward(code)
    if recon.shape != target.shape:
        raise ShapeError(f"reconstruction target {target.shape} vs decoder output {recon.shape}")
    err = recon.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(err * err))
    d_recon = ((2.0 / err.size) * err).astype(recon.dtype)
    d_code, grads = decoder.backward(cache, d_recon)
    return loss, d_code, grads


@dataclass
class AdamState:
    """Adam moments for a flat parameter dict; step counts updates applied."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One bias-corrected Adam update, in place on the param arrays."""
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {key}")
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params


def params_checksum(params: dict) -> bytes:
    """Order-independent fingerprint of a parameter dict (frozen-encoder checks)."""
    import hashlib

    h = hashlib.blake2b(digest_size=16)
    for key in sorted(params):
        h.update(key.encode())
        h.update(np.ascontiguousarray(params[key], dtype=DTYPE).tobytes())
    return h.digest()
