"""Seeded paired two-modality sequence generator with open-set class splits.

Every class owns a latent prototype sequence; each sample jitters it, and
each modality observes the latent through its own fixed nonlinear map plus
noise. A corruption rate replaces some of modality b's latent timesteps with
fresh noise, modeling imperfectly aligned pairs. Known/unknown class
partitions and the sample splits (pretrain / probe / test) are derived
deterministically from the seed; re-splitting at a different known:unknown
ratio never moves pretrain membership.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .tensors import DTYPE, SeededRng, load_tensor, save_tensor

SPLIT_NAMES = ("pretrain", "probe_train", "probe_val", "test_known", "test_unknown")

RATIO_PRESETS = {"1:1": (1, 1), "3:1": (3, 1)}


@dataclass
class GenSpec:
    n_classes: int = 8
    n_known: int = 4
    samples_per_class: int = 60
    timesteps: int = 4
    d_in_a: int = 24
    d_in_b: int = 24
    latent_dim: int = 16
    sigma: float = 0.1
    corruption: float = 0.1
    seed: int = 7

    def validate(self) -> "GenSpec":
        if not 1 <= self.n_known < self.n_classes:
            raise ConfigError(
                f"gen.n_known must satisfy 1 <= n_known < gen.n_classes, got "
                f"{self.n_known} of {self.n_classes}"
            )
        if self.samples_per_class < 10:
            raise ConfigError(f"gen.samples_per_class must be >= 10, got {self.samples_per_class}")
        if self.sigma < 0:
            raise ConfigError(f"gen.sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.corruption < 1.0:
            raise ConfigError(f"gen.corruption must be in [0, 1), got {self.corruption}")
        for name in ("timesteps", "d_in_a", "d_in_b", "latent_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"gen.{name} must be >= 1")
        return self


@dataclass
class ModalBatch:
    x_a: np.ndarray      # (N, T, d_in_a)
    x_b: np.ndarray      # (N, T, d_in_b)
    labels: np.ndarray   # (N,)
    split: str

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass
class SynthDataset:
    spec: GenSpec
    x_a: np.ndarray
    x_b: np.ndarray
    labels: np.ndarray
    known_classes: list
    unknown_classes: list
    split_indices: dict = field(default_factory=dict)

    def batch(self, split: str) -> ModalBatch:
        if split not in self.split_indices:
            raise DataError(f"unknown split {split!r}; have {sorted(self.split_indices)}")
        idx = self.split_indices[split]
        return ModalBatch(self.x_a[idx], self.x_b[idx], self.labels[idx], split)

    def split_sizes(self) -> dict:
        return {name: int(len(self.split_indices[name])) for name in SPLIT_NAMES}


def known_count(n_classes: int, ratio: str) -> int:
    """Known-class count for a ratio preset (known:unknown)."""
    if ratio not in RATIO_PRESETS:
        raise ConfigError(f"split ratio must be one of {sorted(RATIO_PRESETS)}, got {ratio!r}")
    k, u = RATIO_PRESETS[ratio]
    return (n_classes * k) // (k + u)


def class_split(labels, n_known: int, seed: int):
    """Deterministic partition of the distinct labels into (known, unknown)."""
    classes = sorted(set(int(v) for v in np.asarray(labels).reshape(-1)))
    if not 1 <= n_known < len(classes):
        raise ConfigError(
            f"gen.n_known must be in [1, {len(classes) - 1}] for {len(classes)} classes, got {n_known}"
        )
    order = SeededRng(seed).spawn("class_split").permutation(len(classes))
    known = sorted(classes[i] for i in order[:n_known])
    unknown = sorted(classes[i] for i in order[n_known:])
    return known, unknown


def _allocate(spec: GenSpec, known: bool):
    """Per-class sample allocation: first half pretrains regardless of the
    known/unknown status, so re-splitting never disturbs pretrain."""
    s = spec.samples_per_class
    n_pre = s // 2
    rest = s - n_pre
    if known:
        n_train = (rest * 2) // 5
        n_val = rest // 5
        return {"pretrain": n_pre, "probe_train": n_train, "probe_val": n_val,
                "test_known": rest - n_train - n_val, "test_unknown": 0}
    return {"pretrain": n_pre, "probe_train": 0, "probe_val": 0,
            "test_known": 0, "test_unknown": rest}


def derive_splits(labels: np.ndarray, spec: GenSpec, n_known: int) -> tuple:
    known, unknown = class_split(labels, n_known, spec.seed)
    known_set = set(known)
    indices = {name: [] for name in SPLIT_NAMES}
    for cls in sorted(set(int(v) for v in labels)):
        rows = np.nonzero(labels == cls)[0]
        alloc = _allocate(spec, cls in known_set)
        start = 0
        for name in SPLIT_NAMES:
            take = alloc[name]
            indices[name].extend(int(r) for r in rows[start:start + take])
            start += take
    return known, unknown, {name: np.array(vals, dtype=np.int64) for name, vals in indices.items()}


def generate(spec: GenSpec) -> SynthDataset:
    """Produce the full paired dataset; bitwise deterministic under the seed."""
    spec.validate()
    root = SeededRng(spec.seed)
    scale = 1.0 / np.sqrt(spec.latent_dim)
    map_a = (root.spawn("map", "a").normal((spec.latent_dim, spec.d_in_a)) * scale).astype(DTYPE)
    map_b = (root.spawn("map", "b").normal((spec.latent_dim, spec.d_in_b)) * scale).astype(DTYPE)

    xs_a, xs_b, labels = [], [], []
    for cls in range(spec.n_classes):
        proto = root.spawn("proto", cls).normal((spec.timesteps, spec.latent_dim))
        rng = root.spawn("class", cls)
        s, t, d = spec.samples_per_class, spec.timesteps, spec.latent_dim
        latent = proto[None, :, :] + spec.sigma * rng.normal((s, t, d))
        # corruption candidates and coin flips are always drawn so the stream
        # stays aligned across corruption settings
        replacement = rng.normal((s, t, d))
        corrupt = rng.random((s, t)) < spec.corruption
        latent_b = np.where(corrupt[:, :, None], replacement, latent)
        obs_a = np.tanh(latent @ map_a.astype(np.float64)) + spec.sigma * rng.normal((s, t, spec.d_in_a))
        obs_b = np.tanh(latent_b @ map_b.astype(np.float64)) + spec.sigma * rng.normal((s, t, spec.d_in_b))
        xs_a.append(obs_a.astype(DTYPE))
        xs_b.append(obs_b.astype(DTYPE))
        labels.extend([cls] * s)

    labels = np.array(labels, dtype=np.int64)
    known, unknown, indices = derive_splits(labels, spec, spec.n_known)
    return SynthDataset(
        spec=spec,
        x_a=np.concatenate(xs_a, axis=0),
        x_b=np.concatenate(xs_b, axis=0),
        labels=labels,
        known_classes=known,
        unknown_classes=unknown,
        split_indices=indices,
    )


def resplit(dataset: SynthDataset, n_known: int) -> SynthDataset:
    """Same samples, different known:unknown partition (pretrain unchanged)."""
    known, unknown, indices = derive_splits(dataset.labels, dataset.spec, n_known)
    return SynthDataset(
        spec=dataset.spec, x_a=dataset.x_a, x_b=dataset.x_b, labels=dataset.labels,
        known_classes=known, unknown_classes=unknown, split_indices=indices,
    )


def pairing_statistic(x_a: np.ndarray, x_b: np.ndarray) -> float:
    """Pearson correlation between the two modalities' pairwise-distance
    matrices (upper triangles). Genuinely paired rows correlate; permuting
    one side drops the statistic to chance."""
    fa = x_a.reshape(x_a.shape[0], -1).astype(np.float64)
    fb = x_b.reshape(x_b.shape[0], -1).astype(np.float64)
    da = _pdist(fa)
    db = _pdist(fb)
    da = da - da.mean()
    db = db - db.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    return float((da * db).sum() / denom) if denom > 0 else 0.0


def _pdist(flat: np.ndarray) -> np.ndarray:
    sq = (flat * flat).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * flat @ flat.T, 0.0)
    iu = np.triu_indices(flat.shape[0], k=1)
    return np.sqrt(d2[iu])


def save_dataset(dirpath, dataset: SynthDataset) -> None:
    os.makedirs(dirpath, exist_ok=True)
    save_tensor(os.path.join(dirpath, "x_a"), dataset.x_a)
    save_tensor(os.path.join(dirpath, "x_b"), dataset.x_b)
    manifest = {
        "spec": asdict(dataset.spec),
        "labels": dataset.labels.tolist(),
        "known_classes": dataset.known_classes,
        "unknown_classes": dataset.unknown_classes,
        "splits": {k: v.tolist() for k, v in dataset.split_indices.items()},
    }
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_dataset(dirpath) -> SynthDataset:
    path = os.path.join(dirpath, "manifest.json")
    if not os.path.exists(path):
        raise DataError(f"no dataset manifest at {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    return SynthDataset(
        spec=GenSpec(**manifest["spec"]),
        x_a=load_tensor(os.path.join(dirpath, "x_a")),
        x_b=load_tensor(os.path.join(dirpath, "x_b")),
        labels=np.array(manifest["labels"], dtype=np.int64),
        known_classes=manifest["known_classes"],
        unknown_classes=manifest["unknown_classes"],
        split_indices={k: np.array(v, dtype=np.int64) for k, v in manifest["splits"].items()},
    )
