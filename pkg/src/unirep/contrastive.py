"""Masked fine/coarse contrastive objectives over paired-modality latents.

Masking zeroes a per-sample subset of feature dimensions, held constant
across timesteps and (in aligned mode) identical for the two modalities of a
pair. The fine loss contrasts a masked timestep vector against the matching
timestep of the reference stream, with the sample's other timesteps as
negatives; the coarse loss contrasts whole samples (timesteps concatenated)
against the rest of the batch. Both return analytic gradients for the masked
and the reference side.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensors import SeededRng

ALL_PAIRS = (("a", "a"), ("a", "b"), ("b", "a"), ("b", "b"))


@dataclass
class MaskPlan:
    """Per-sample masked feature dimensions for each modality.

    The same index set applies at every timestep of a sample; in aligned
    mode the sets for the two modalities are identical per sample.
    """

    ratio: float
    mode: str
    n_features: int
    indices: dict = field(default_factory=dict)  # modality -> list of sorted index arrays

    def for_modality(self, modality: str):
        return self.indices[modality]


def make_masks(rng: SeededRng, n_samples: int, n_features: int, ratio: float,
               mode: str = "aligned", modalities=("a", "b")) -> MaskPlan:
    """Draw floor(ratio * n_features) distinct masked dims per sample."""
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"fcmi.mask_ratio must be in [0, 1), got {ratio}")
    if mode not in ("aligned", "independent"):
        raise ConfigError(f"fcmi.mask_mode must be aligned|independent, got {mode!r}")
    k = int(ratio * n_features)
    plan = MaskPlan(ratio=ratio, mode=mode, n_features=n_features)
    if mode == "aligned":
        shared = [np.sort(rng.choice(n_features, k)) for _ in range(n_samples)]
        plan.indices = {m: [idx.copy() for idx in shared] for m in modalities}
    else:
        plan.indices = {
            m: [np.sort(rng.choice(n_features, k)) for _ in range(n_samples)]
            for m in modalities
        }
    return plan


def apply_mask(latents: np.ndarray, plan: MaskPlan, modality: str) -> np.ndarray:
    """Zero the planned dims of every timestep; idempotent."""
    idx = plan.for_modality(modality)
    if latents.shape[0] != len(idx) or latents.shape[-1] != plan.n_features:
        raise ShapeError(
            f"latents {latents.shape} vs plan for {len(idx)} samples x {plan.n_features} dims"
        )
    out = latents.copy()
    for i, dims in enumerate(idx):
        out[i, ..., dims] = 0.0
    return out


def mask_gradient(d_masked: np.ndarray, plan: MaskPlan, modality: str) -> np.ndarray:
    """Backward of apply_mask: gradients at masked dims do not reach the input."""
    return apply_mask(d_masked, plan, modality)


def _unit_rows(v: np.ndarray):
    norm = np.sqrt((v * v).sum(axis=-1, keepdims=True) + 1e-16)
    return v / norm, norm


def _unit_rows_backward(unit: np.ndarray, norm: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    return (d_unit - unit * (unit * d_unit).sum(axis=-1, keepdims=True)) / norm


def fine_loss(masked: np.ndarray, reference: np.ndarray, tau: float):
    """Timestep-level contrast within each sample.

    loss = -(1/N)(1/T) sum_i sum_j log softmax_k(masked_ij . reference_ik / tau)[j]

    Returns (loss, d_masked, d_reference). T < 2 is degenerate (the positive
    is the only candidate): warns and returns an exact zero.
    """
    if masked.shape != reference.shape or masked.ndim != 3:
        raise ShapeError(f"fine contrast needs equal (N,T,D) inputs, got {masked.shape} vs {reference.shape}")
    if tau <= 0:
        raise ConfigError(f"fcmi.tau must be positive, got {tau}")
    n, t, _ = masked.shape
    if t < 2:
        warnings.warn("fine contrast degenerate: fewer than 2 timesteps, loss is identically 0")
        return 0.0, np.zeros_like(masked), np.zeros_like(reference)
    a = masked.astype(np.float64, copy=False)
    b = reference.astype(np.float64, copy=False)
    logits = np.einsum("ijd,ikd->ijk", a, b) / tau
    shifted = logits - logits.max(axis=2, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=2, keepdims=True))
    diag = np.arange(t)
    loss = -float(logp[:, diag, diag].sum()) / (n * t)
    d_logits = np.exp(logp)
    d_logits[:, diag, diag] -= 1.0
    d_logits /= n * t * tau
    d_masked = np.einsum("ijk,ikd->ijd", d_logits, b)
    d_reference = np.einsum("ijk,ijd->ikd", d_logits, a)
    return loss, d_masked.astype(masked.dtype), d_reference.astype(reference.dtype)


def coarse_loss(masked: np.ndarray, reference: np.ndarray, tau: float):
    """Sample-level contrast across the batch.

    Inputs are per-sample vectors (timesteps already concatenated), shape
    (N, F). loss = -(1/N) sum_i log softmax_j(masked_i . reference_j / tau)[i].
    N < 2 is degenerate: warns and returns an exact zero.
    """
    if masked.shape != reference.shape or masked.ndim != 2:
        raise ShapeError(f"coarse contrast needs equal (N,F) inputs, got {masked.shape} vs {reference.shape}")
    if tau <= 0:
        raise ConfigError(f"fcmi.tau must be positive, got {tau}")
    n = masked.shape[0]
    if n < 2:
        warnings.warn("coarse contrast degenerate: fewer than 2 samples, loss is identically 0")
        return 0.0, np.zeros_like(masked), np.zeros_like(reference)
    a = masked.astype(np.float64, copy=False)
    b = reference.astype(np.float64, copy=False)
    logits = (a @ b.T) / tau
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    diag = np.arange(n)
    loss = -float(logp[diag, diag].sum()) / n
    d_logits = np.exp(logp)
    d_logits[diag, diag] -= 1.0
    d_logits /= n * tau
    d_masked = d_logits @ b
    d_reference = d_logits.T @ a
    return loss, d_masked.astype(masked.dtype), d_reference.astype(reference.dtype)


@dataclass
class ContrastConfig:
    tau: float = 1.0
    mask_ratio: float = 0.3
    mask_mode: str = "aligned"
    pairs: tuple = ALL_PAIRS
    normalize: bool = False
    use_fine: bool = True
    use_coarse: bool = True

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"fcmi.tau must be positive, got {self.tau}")
        for pair in self.pairs:
            if len(pair) != 2:
                raise ConfigError(f"fcmi.pairs entries must be ordered pairs, got {pair!r}")


def total_contrast(latents: dict, plan: MaskPlan, config: ContrastConfig):
    """Fine + coarse contrast summed over the configured ordered pairs.

    For each pair (m, n), the m side is masked and the n side is left
    unmasked; contrast between two unmasked streams is never computed.
    Returns (total, grads per modality, {"fine": .., "coarse": ..}).
    """
    masked = {m: apply_mask(latents[m], plan, m) for m in latents}
    grads = {m: np.zeros(latents[m].shape, dtype=np.float64) for m in latents}
    n_samples = next(iter(latents.values())).shape[0]
    fine_sum = 0.0
    coarse_sum = 0.0
    for m, n in config.pairs:
        if config.use_fine:
            fine_sum += _pair_term(
                masked[m], latents[n], plan, m, n, grads, config, flatten=False
            )
        if config.use_coarse:
            coarse_sum += _pair_term(
                masked[m].reshape(n_samples, -1),
                latents[n].reshape(n_samples, -1),
                plan, m, n, grads, config, flatten=True,
            )
    out = {m: grads[m].astype(latents[m].dtype) for m in latents}
    return fine_sum + coarse_sum, out, {"fine": fine_sum, "coarse": coarse_sum}


def _pair_term(side_m, side_n, plan, m, n, grads, config, flatten):
    loss_fn = coarse_loss if flatten else fine_loss
    if config.normalize:
        um, rm = _unit_rows(side_m.astype(np.float64))
        un, rn = _unit_rows(side_n.astype(np.float64))
        loss, d_um, d_un = loss_fn(um, un, config.tau)
        d_m = _unit_rows_backward(um, rm, d_um)
        d_n = _unit_rows_backward(un, rn, d_un)
    else:
        loss, d_m, d_n = loss_fn(side_m, side_n, config.tau)
    shape = grads[m].shape
    d_m = d_m.reshape(shape) if flatten else d_m
    d_n = d_n.reshape(shape) if flatten else d_n
    grads[m] += mask_gradient(np.asarray(d_m, dtype=np.float64), plan, m)
    grads[n] += d_n
    return loss
