"""Shared discrete latent dictionary with EMA codeword re-estimation.

Quantization assigns each latent vector to its nearest codeword (squared L2,
ties to the lowest index). Codewords are not trained by gradient: cluster
sizes and vector sums are tracked as exponential moving averages and each
update recomputes every codeword as its Laplace-smoothed running mean. The
commitment loss pulls encoders toward their assigned codewords; the
straight-through surrogate lets downstream losses consume quantized values
while routing gradients to the continuous latents unchanged.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensors import DTYPE, SeededRng, load_tensor, save_tensor


class Codebook:
    """Codeword table (size x dim) plus EMA accumulators.

    Stored cluster sizes are unsmoothed; Laplace smoothing enters only the
    codeword quotient, so the total EMA mass is exactly conserved step to
    step. Accumulators start at mass 1 per codeword so never-assigned
    codewords hold their value instead of being rescaled toward zero.
    """

    def __init__(self, codewords: np.ndarray, gamma: float = 0.99, epsilon: float = 1e-5):
        codewords = np.asarray(codewords, dtype=DTYPE)
        if codewords.ndim != 2 or codewords.shape[0] < 1:
            raise ConfigError(f"codebook needs a (size, dim) table with size >= 1, got {codewords.shape}")
        if not 0.0 <= gamma < 1.0:
            raise ConfigError(f"codebook.gamma must be in [0, 1), got {gamma}")
        if epsilon <= 0:
            raise ConfigError(f"codebook.epsilon must be positive, got {epsilon}")
        self.codewords = codewords.copy()
        self.gamma = float(gamma)
        self.epsilon = float(epsilon)
        self.ema_counts = np.ones(codewords.shape[0], dtype=np.float64)
        self.ema_sums = codewords.astype(np.float64).copy()
        self.step = 0
        self.unused_steps = np.zeros(codewords.shape[0], dtype=np.int64)

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def dim(self) -> int:
        return self.codewords.shape[1]

    @classmethod
    def init_from_batch(cls, rng: SeededRng, vectors: np.ndarray, size: int,
                        gamma: float = 0.99, epsilon: float = 1e-5,
                        noise_scale: float = 0.01) -> "Codebook":
        """Seed codewords from observed vectors plus small noise (no cold start)."""
        flat = np.asarray(vectors, dtype=DTYPE).reshape(-1, vectors.shape[-1])
        picks = rng.choice(flat.shape[0], size, replace=flat.shape[0] < size)
        words = flat[picks] + noise_scale * rng.normal(
            (size, flat.shape[1])).astype(DTYPE)
        return cls(words, gamma=gamma, epsilon=epsilon)


@dataclass
class QuantizationResult:
    indices: np.ndarray    # leading shape of the input
    quantized: np.ndarray  # input shape; rows are verbatim codeword copies
    distances: np.ndarray  # squared L2 per assignment


def quantize(book: Codebook, latents: np.ndarray) -> QuantizationResult:
    """Nearest-codeword assignment per vector; squared distances in float64."""
    if latents.shape[-1] != book.dim:
        raise ShapeError(f"latents {latents.shape} do not end in codebook dim {book.dim}")
    lead = latents.shape[:-1]
    flat = latents.reshape(-1, book.dim).astype(np.float64)
    words = book.codewords.astype(np.float64)
    d2 = (
        (flat * flat).sum(axis=1)[:, None]
        + (words * words).sum(axis=1)[None, :]
        - 2.0 * flat @ words.T
    )
    np.maximum(d2, 0.0, out=d2)
    idx = np.argmin(d2, axis=1)  # argmin takes the first (lowest) index on ties
    gathered = d2[np.arange(flat.shape[0]), idx]
    return QuantizationResult(
        indices=idx.reshape(lead),
        quantized=book.codewords[idx].reshape(latents.shape),
        distances=gathered.reshape(lead),
    )


def usage_counts(indices: np.ndarray, size: int) -> np.ndarray:
    return np.bincount(indices.reshape(-1), minlength=size).astype(np.float64)


def ema_update(book: Codebook, latents: np.ndarray, indices: np.ndarray,
               reseed_after: int = 0, rng: SeededRng | None = None) -> Codebook:
    """Fold one batch of assignments into the EMA accumulators, in place.

    counts <- g*counts + (1-g)*batch counts; sums likewise; every codeword is
    then recomputed as sums / smoothed(counts). Optionally reseeds codewords
    unused for ``reseed_after`` consecutive updates from a random batch vector.
    """
    flat = latents.reshape(-1, book.dim).astype(np.float64)
    idx = indices.reshape(-1)
    if flat.shape[0] != idx.shape[0]:
        raise ShapeError(f"{flat.shape[0]} vectors vs {idx.shape[0]} assignments")
    counts = usage_counts(idx, book.size)
    sums = np.zeros((book.size, book.dim), dtype=np.float64)
    np.add.at(sums, idx, flat)
    g = book.gamma
    book.ema_counts = g * book.ema_counts + (1.0 - g) * counts
    book.ema_sums = g * book.ema_sums + (1.0 - g) * sums
    total = book.ema_counts.sum()
    smoothed = (book.ema_counts + book.epsilon) / (total + book.size * book.epsilon) * total
    book.codewords = (book.ema_sums / smoothed[:, None]).astype(DTYPE)
    book.step += 1
    book.unused_steps = np.where(counts > 0, 0, book.unused_steps + 1)
    if reseed_after > 0:
        dead = np.nonzero(book.unused_steps >= reseed_after)[0]
        if dead.size and rng is not None:
            picks = rng.choice(flat.shape[0], int(dead.size), replace=flat.shape[0] < dead.size)
            fresh = flat[picks] + 0.01 * rng.normal((dead.size, book.dim))
            book.codewords[dead] = fresh.astype(DTYPE)
            book.ema_counts[dead] = 1.0
            book.ema_sums[dead] = fresh
            book.unused_steps[dead] = 0
    return book


def commit_loss(latents: np.ndarray, quantized: np.ndarray):
    """MSE between latents and their (stop-gradient) codewords.

    The codeword side is a constant; the gradient flows only to latents.
    """
    if latents.shape != quantized.shape:
        raise ShapeError(f"commit loss shapes differ: {latents.shape} vs {quantized.shape}")
    err = latents.astype(np.float64) - quantized.astype(np.float64)
    loss = float(np.mean(err * err))
    d_latents = ((2.0 / err.size) * err).astype(latents.dtype)
    return loss, d_latents


def straight_through(latents: np.ndarray, quantized: np.ndarray) -> np.ndarray:
    """Forward value is the quantized tensor; backward passes gradients to
    the latents unchanged (see straight_through_backward)."""
    if latents.shape != quantized.shape:
        raise ShapeError(f"straight-through shapes differ: {latents.shape} vs {quantized.shape}")
    return quantized.copy()


def straight_through_backward(d_output: np.ndarray) -> np.ndarray:
    return d_output


def perplexity(counts: np.ndarray) -> float:
    """exp(entropy) of assignment frequencies; in [1, size] when any mass."""
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(np.exp(-(p * np.log(p)).sum()))


def coactivation(counts_by_modality: dict) -> list:
    """Per-codeword activation shares and sharing class.

    Class = number of modalities holding >= 10% of the codeword's
    activations: 0 -> dead, 1 -> single, >= 2 -> shared ("unified" when every
    modality of a 3+ stream setup clears the bar).
    """
    modalities = sorted(counts_by_modality)
    table = np.stack([counts_by_modality[m] for m in modalities], axis=1).astype(np.float64)
    totals = table.sum(axis=1)
    rows = []
    for l in range(table.shape[0]):
        if totals[l] <= 0:
            shares = {m: 0.0 for m in modalities}
            klass = "dead"
        else:
            shares = {m: float(table[l, j] / totals[l]) for j, m in enumerate(modalities)}
            active = sum(1 for s in shares.values() if s >= 0.10)
            if active <= 0:
                klass = "dead"
            elif active == 1:
                klass = "single"
            elif active == len(modalities) and len(modalities) >= 3:
                klass = "unified"
            else:
                klass = "shared"
        rows.append({"codeword": l, "shares": shares, "class": klass})
    return rows


def write_coactivation_csv(path, rows) -> None:
    modalities = sorted(rows[0]["shares"]) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["codeword_id"] + [f"share_{m}" for m in modalities] + ["class"])
        for row in rows:
            writer.writerow(
                [row["codeword"]]
                + [f"{row['shares'][m]:.6f}" for m in modalities]
                + [row["class"]]
            )


def save_codebook(dirpath, book: Codebook) -> None:
    os.makedirs(dirpath, exist_ok=True)
    save_tensor(os.path.join(dirpath, "codewords"), book.codewords)
    np.save(os.path.join(dirpath, "ema_counts.npy"), book.ema_counts)
    np.save(os.path.join(dirpath, "ema_sums.npy"), book.ema_sums)
    manifest = {"size": book.size, "dim": book.dim, "gamma": book.gamma,
                "epsilon": book.epsilon, "step": book.step}
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_codebook(dirpath) -> Codebook:
    with open(os.path.join(dirpath, "manifest.json")) as fh:
        manifest = json.load(fh)
    book = Codebook(load_tensor(os.path.join(dirpath, "codewords")),
                    gamma=manifest["gamma"], epsilon=manifest["epsilon"])
    book.ema_counts = np.load(os.path.join(dirpath, "ema_counts.npy"))
    book.ema_sums = np.load(os.path.join(dirpath, "ema_sums.npy"))
    book.step = manifest["step"]
    return book
