"""Permutation-classification pretext over quantized code segments.

A code vector is cut into equal segments; each segment slot is filled from
either modality's quantized code (chosen uniformly, modality-agnostic), the
slots are shuffled by a permutation drawn from a sampled universe, and a
linear head classifies which permutation was applied. The all-modalities
baseline variant concatenates and permutes every modality's segments at once,
whose permutation space grows factorially with the total segment count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .tensors import DTYPE, SeededRng, log_softmax, matmul


@dataclass
class PermutationUniverse:
    """P distinct segment orderings; index in ``perms`` is the class label.

    Row 0 is always the identity ordering.
    """

    segments: int
    perms: np.ndarray  # (P, segments) int64

    @property
    def size(self) -> int:
        return self.perms.shape[0]


def universe_bound(segments: int) -> int:
    return math.factorial(segments)


def build_universe(rng: SeededRng, segments: int, count: int) -> PermutationUniverse:
    """Sample ``count`` distinct orderings (identity forced first, rest uniform)."""
    if segments < 1:
        raise ConfigError(f"cujp.segments must be >= 1, got {segments}")
    bound = universe_bound(segments)
    if not 1 <= count <= bound:
        raise ConfigError(
            f"cujp.permutations must be in [1, {segments}! = {bound}], got {count}"
        )
    identity = tuple(range(segments))
    perms = [identity]
    seen = {identity}
    while len(perms) < count:
        cand = tuple(int(v) for v in rng.permutation(segments))
        if cand not in seen:
            seen.add(cand)
            perms.append(cand)
    return PermutationUniverse(segments=segments, perms=np.array(perms, dtype=np.int64))


@dataclass
class JigsawInstance:
    """One composed puzzle: the vector, its permutation label, and where each
    output slot came from as (source, segment index) pairs."""

    vector: np.ndarray
    label: int
    provenance: list
    slot_lengths: list


def compose_fixed(universe: PermutationUniverse, perm_index: int, sources,
                  code_a: np.ndarray, code_b: np.ndarray) -> JigsawInstance:
    """Deterministic composition kernel: segment slot s of the output holds
    segment perm[s] of the source-mixed code."""
    if code_a.shape != code_b.shape or code_a.ndim != 1:
        raise ShapeError(f"codes must be equal-length vectors, got {code_a.shape} vs {code_b.shape}")
    o = universe.segments
    dim = code_a.shape[0]
    if dim % o != 0:
        raise ShapeError(f"segment count {o} does not divide code length {dim}")
    if len(sources) != o:
        raise ShapeError(f"need {o} segment sources, got {len(sources)}")
    seg = dim // o
    codes = {"a": code_a, "b": code_b}
    perm = universe.perms[perm_index]
    out = np.empty(dim, dtype=DTYPE)
    provenance = []
    for slot in range(o):
        src_seg = int(perm[slot])
        src_mod = sources[src_seg]
        out[slot * seg:(slot + 1) * seg] = codes[src_mod][src_seg * seg:(src_seg + 1) * seg]
        provenance.append((src_mod, src_seg))
    return JigsawInstance(vector=out, label=int(perm_index), provenance=provenance,
                          slot_lengths=[seg] * o)


def compose_instance(rng: SeededRng, universe: PermutationUniverse,
                     code_a: np.ndarray, code_b: np.ndarray) -> JigsawInstance:
    """Uniform per-segment modality choice, then a uniform universe draw."""
    sources = ["a" if rng.randint(2) == 0 else "b" for _ in range(universe.segments)]
    perm_index = rng.randint(universe.size)
    return compose_fixed(universe, perm_index, sources, code_a, code_b)


def route_gradient(instance: JigsawInstance, d_vector: np.ndarray,
                   source_dims: dict) -> dict:
    """Scatter a composed-vector gradient back onto each source code vector.

    Sources listed in source_dims but absent from the instance get zeros.
    """
    out = {src: np.zeros(dim, dtype=np.float64) for src, dim in source_dims.items()}
    offset = 0
    for (src, seg_idx), length in zip(instance.provenance, instance.slot_lengths):
        out[src][seg_idx * length:(seg_idx + 1) * length] += d_vector[offset:offset + length]
        offset += length
    return {src: g.astype(d_vector.dtype) for src, g in out.items()}


class PermClassifier:
    """Single linear layer over composed vectors; softmax rows sum to 1."""

    def __init__(self, in_dim: int, n_classes: int, rng: SeededRng | None = None):
        if rng is None:
            self.weights = np.zeros((in_dim, n_classes), dtype=DTYPE)
            self.bias = np.zeros(n_classes, dtype=DTYPE)
        else:
            bound = 1.0 / np.sqrt(in_dim)
            self.weights = rng.uniform(-bound, bound, (in_dim, n_classes))
            self.bias = rng.uniform(-bound, bound, (n_classes,))

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    def params(self) -> dict:
        return {"w": self.weights, "b": self.bias}

    def set_params(self, params: dict) -> None:
        self.weights = params["w"]
        self.bias = params["b"]

    def logits(self, vectors: np.ndarray) -> np.ndarray:
        if vectors.shape[-1] != self.weights.shape[0]:
            raise ShapeError(f"classifier input {vectors.shape} vs weight {self.weights.shape}")
        return matmul(vectors, self.weights) + self.bias

    def probabilities(self, vectors: np.ndarray) -> np.ndarray:
        return np.exp(log_softmax(self.logits(vectors).astype(np.float64), axis=-1))


def jigsaw_loss(clf: PermClassifier, vectors: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of permutation predictions.

    Returns (loss, d_vectors, {"w": .., "b": ..}); the input gradient is what
    flows back through the straight-through path to the encoders.
    """
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= clf.n_classes:
        raise DataError(
            f"permutation labels must lie in [0, {clf.n_classes}), got "
            f"[{labels.min()}, {labels.max()}]"
        )
    batch = vectors.shape[0]
    logp = log_softmax(clf.logits(vectors).astype(np.float64), axis=-1)
    rows = np.arange(batch)
    loss = -float(logp[rows, labels].sum()) / batch
    d_logits = np.exp(logp)
    d_logits[rows, labels] -= 1.0
    d_logits /= batch
    grads = {
        "w": matmul(vectors.astype(np.float64).T, d_logits).astype(clf.weights.dtype),
        "b": d_logits.sum(axis=0).astype(clf.bias.dtype),
    }
    d_vectors = (d_logits @ clf.weights.astype(np.float64).T).astype(vectors.dtype)
    return loss, d_vectors, grads


def mixed_bound(n_modalities: int, splits: int) -> int:
    """Permutation-space size when all modalities' segments shuffle together."""
    return math.factorial(n_modalities * splits)


def check_mixed_feasible(n_modalities: int, splits: int, cap: int) -> int:
    bound = mixed_bound(n_modalities, splits)
    if bound > cap:
        raise ConfigError(
            f"mmjp cell with {n_modalities} modalities x {splits} splits needs "
            f"{n_modalities * splits}! = {bound} orderings, over cujp.mmjp_cap = {cap}"
        )
    return bound


def mixed_compose(rng: SeededRng, codes: list, splits: int,
                  universe: PermutationUniverse) -> JigsawInstance:
    """Baseline composition: concatenate every modality's segments and permute
    the full set. Output length is the sum of all modality dims."""
    total = len(codes) * splits
    if universe.segments != total:
        raise ShapeError(f"universe covers {universe.segments} segments, cell has {total}")
    pieces = []
    for m, code in enumerate(codes):
        if code.ndim != 1 or code.shape[0] % splits != 0:
            raise ShapeError(f"modality {m} code of length {code.shape} not divisible into {splits} segments")
        seg = code.shape[0] // splits
        pieces.extend((m, s, code[s * seg:(s + 1) * seg]) for s in range(splits))
    perm_index = rng.randint(universe.size)
    perm = universe.perms[perm_index]
    ordered = [pieces[int(j)] for j in perm]
    vector = np.concatenate([chunk for _, _, chunk in ordered]).astype(DTYPE)
    provenance = [(m, s) for m, s, _ in ordered]
    lengths = [chunk.shape[0] for _, _, chunk in ordered]
    return JigsawInstance(vector=vector, label=int(perm_index), provenance=provenance,
                          slot_lengths=lengths)
