"""Training and evaluation orchestration.

Pretraining runs the composite objective (masked fine/coarse contrast,
jigsaw pretext, reconstruction, commitment) with EMA codebook updates and a
single Adam step per batch over every gradient-trained parameter. Downstream,
a linear probe is trained on one modality's frozen pooled latents and
evaluated through the other modality's frozen encoder with max-softmax
unknown rejection; cross-modal retrieval and codebook statistics round out
the report.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import codebook as cb
from . import contrastive as ct
from . import jigsaw as jg
from .encoders import AdamState, Mlp, adam_step, reconstruction_loss
from .errors import ConfigError, DataError, NumericalError
from .synthdata import SynthDataset
from .tensors import DTYPE, SeededRng, derive_seed, load_tensor, save_tensor, softmax

MODALITIES = ("a", "b")


@dataclass
class LossWeights:
    contrast: float = 1.0
    jigsaw: float = 2.0
    recon: float = 1.0
    commit: float = 1.0

    def __post_init__(self):
        for name in ("contrast", "jigsaw", "recon", "commit"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")

    @classmethod
    def from_config(cls, cfg: dict) -> "LossWeights":
        return cls(
            contrast=cfg["train.lambda_contrast"],
            jigsaw=cfg["train.lambda_jigsaw"],
            recon=cfg["train.lambda_recon"],
            commit=cfg["train.lambda_commit"],
        )


def hos_score(os_star: float, unk: float) -> float:
    """Harmonic mean of known-class accuracy and unknown recall; 0 when both are 0."""
    total = os_star + unk
    if total <= 0:
        return 0.0
    return 2.0 * os_star * unk / total


@dataclass
class PretrainResult:
    encoders: dict
    decoders: dict
    book: cb.Codebook
    classifier: jg.PermClassifier | None
    universe: jg.PermutationUniverse | None
    log: list
    usage: dict  # modality -> assignment counts over the final epoch
    weights: LossWeights


def _finite(name: str, value: float, where: str) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {name} loss at {where}")
    return value


def pretrain(cfg: dict, dataset: SynthDataset) -> PretrainResult:
    """Run the full pretraining loop on the dataset's pretrain split."""
    batch_all = dataset.batch("pretrain")
    if batch_all.n == 0:
        raise DataError("pretrain split is empty")
    d_latent = cfg["model.d_latent"]
    d_hidden = cfg["model.d_hidden"]
    t_steps = dataset.spec.timesteps
    root = SeededRng(derive_seed(cfg["seed"], "pretrain"))
    weights = LossWeights.from_config(cfg)

    d_in = {"a": dataset.spec.d_in_a, "b": dataset.spec.d_in_b}
    encoders = {m: Mlp(f"encoder_{m}", d_in[m], d_hidden, d_latent, root.spawn("init", "enc", m))
                for m in MODALITIES}
    decoders = {m: Mlp(f"decoder_{m}", d_latent, d_hidden, d_in[m], root.spawn("init", "dec", m))
                for m in MODALITIES}

    contrast_cfg = ct.ContrastConfig(
        tau=cfg["fcmi.tau"],
        mask_ratio=cfg["fcmi.mask_ratio"],
        mask_mode=cfg["fcmi.mask_mode"],
        pairs=tuple((p[0], p[1]) for p in cfg["fcmi.pairs"]),
        normalize=cfg["fcmi.normalize"],
        use_fine=cfg["fcmi.fine"],
        use_coarse=cfg["fcmi.coarse"],
    )
    contrast_active = weights.contrast > 0 and (contrast_cfg.use_fine or contrast_cfg.use_coarse)

    jig_mode = cfg["cujp.mode"]
    jig_active = weights.jigsaw > 0 and jig_mode != "off"
    universe = None
    classifier = None
    if jig_active:
        if jig_mode == "cujp":
            segments = cfg["cujp.segments"]
            if d_latent % segments != 0:
                raise ConfigError(f"cujp.segments = {segments} must divide model.d_latent = {d_latent}")
            count = min(cfg["cujp.permutations"], jg.universe_bound(segments))
            universe = jg.build_universe(root.spawn("init", "universe"), segments, count)
            clf_dim = d_latent
        else:
            splits = cfg["cujp.mmjp_splits"]
            if d_latent % splits != 0:
                raise ConfigError(f"cujp.mmjp_splits = {splits} must divide model.d_latent = {d_latent}")
            bound = jg.check_mixed_feasible(len(MODALITIES), splits, cfg["cujp.mmjp_cap"])
            count = min(cfg["cujp.permutations"], bound)
            universe = jg.build_universe(root.spawn("init", "universe"), len(MODALITIES) * splits, count)
            clf_dim = d_latent * len(MODALITIES)
        classifier = jg.PermClassifier(clf_dim, universe.size, root.spawn("init", "clf"))

    params = {}
    for m in MODALITIES:
        params.update({f"enc_{m}.{k}": v for k, v in encoders[m].params().items()})
        params.update({f"dec_{m}.{k}": v for k, v in decoders[m].params().items()})
    if classifier is not None:
        params.update({f"clf.{k}": v for k, v in classifier.params().items()})
    adam = AdamState.for_params(params, lr=cfg["train.lr"], beta1=cfg["train.beta1"],
                                beta2=cfg["train.beta2"], eps=cfg["train.adam_epsilon"])

    n = batch_all.n
    batch_size = cfg["train.batch_size"] or n
    book = None
    log = []
    usage = {m: np.zeros(cfg["codebook.size"], dtype=np.float64) for m in MODALITIES}
    x_full = {"a": batch_all.x_a, "b": batch_all.x_b}

    for epoch in range(cfg["train.epochs"]):
        order = root.spawn("order", epoch).permutation(n)
        sums = {k: 0.0 for k in ("l_fine", "l_coarse", "l_cujp", "l_recon", "l_commit", "total")}
        usage = {m: np.zeros(cfg["codebook.size"], dtype=np.float64) for m in MODALITIES}
        n_steps = 0
        for step, start in enumerate(range(0, n, batch_size)):
            rows = order[start:start + batch_size]
            where = f"epoch {epoch} step {step}"
            x = {m: x_full[m][rows] for m in MODALITIES}
            forward = {m: encoders[m].forward(x[m]) for m in MODALITIES}
            latents = {m: forward[m][0] for m in MODALITIES}
            d_latents = {m: np.zeros(latents[m].shape, dtype=np.float64) for m in MODALITIES}

            l_fine = l_coarse = 0.0
            if contrast_active:
                plan = ct.make_masks(root.spawn("mask", epoch, step), len(rows), d_latent,
                                     contrast_cfg.mask_ratio, contrast_cfg.mask_mode)
                _, c_grads, parts = ct.total_contrast(latents, plan, contrast_cfg)
                l_fine = _finite("l_fine", parts["fine"], where)
                l_coarse = _finite("l_coarse", parts["coarse"], where)
                for m in MODALITIES:
                    d_latents[m] += weights.contrast * c_grads[m].astype(np.float64)

            if book is None:
                stacked = np.concatenate([latents[m].reshape(-1, d_latent) for m in MODALITIES])
                book = cb.Codebook.init_from_batch(
                    root.spawn("init", "codebook"), stacked, cfg["codebook.size"],
                    gamma=cfg["codebook.gamma"], epsilon=cfg["codebook.epsilon"])
            quant = {m: cb.quantize(book, latents[m]) for m in MODALITIES}
            cb.ema_update(
                book,
                np.concatenate([latents[m].reshape(-1, d_latent) for m in MODALITIES]),
                np.concatenate([quant[m].indices.reshape(-1) for m in MODALITIES]),
                reseed_after=cfg["codebook.reseed_dead_steps"],
                rng=root.spawn("reseed", epoch, step),
            )
            for m in MODALITIES:
                usage[m] += cb.usage_counts(quant[m].indices, book.size)

            l_recon = 0.0
            grads = {}
            if weights.recon > 0:
                for m in MODALITIES:
                    surrogate = cb.straight_through(latents[m], quant[m].quantized)
                    loss_m, d_code, dec_grads = reconstruction_loss(decoders[m], surrogate, x[m])
                    l_recon += loss_m
                    d_latents[m] += weights.recon * cb.straight_through_backward(d_code).astype(np.float64)
                    for k, g in dec_grads.items():
                        grads[f"dec_{m}.{k}"] = weights.recon * g
                l_recon = _finite("l_recon", l_recon, where)
            else:
                for m in MODALITIES:
                    for k, p in decoders[m].params().items():
                        grads[f"dec_{m}.{k}"] = np.zeros_like(p)

            l_commit = 0.0
            if weights.commit > 0:
                for m in MODALITIES:
                    loss_m, d_z = cb.commit_loss(latents[m], quant[m].quantized)
                    l_commit += loss_m
                    d_latents[m] += weights.commit * d_z.astype(np.float64)
                l_commit = _finite("l_commit", l_commit, where)

            l_cujp = 0.0
            if jig_active:
                jrng = root.spawn("jig", epoch, step)
                instances = []
                for i in range(len(rows)):
                    for _ in range(cfg["cujp.instances_per_sample"]):
                        t = jrng.randint(t_steps)
                        code_a = quant["a"].quantized[i, t]
                        code_b = quant["b"].quantized[i, t]
                        if jig_mode == "cujp":
                            inst = jg.compose_instance(jrng, universe, code_a, code_b)
                        else:
                            inst = jg.mixed_compose(jrng, [code_a, code_b], cfg["cujp.mmjp_splits"], universe)
                        instances.append((i, t, inst))
                vectors = np.stack([inst.vector for _, _, inst in instances])
                labels = np.array([inst.label for _, _, inst in instances], dtype=np.int64)
                l_cujp, d_vecs, clf_grads = jg.jigsaw_loss(classifier, vectors, labels)
                l_cujp = _finite("l_cujp", l_cujp, where)
                source_dims = ({"a": d_latent, "b": d_latent} if jig_mode == "cujp"
                               else {0: d_latent, 1: d_latent})
                for (i, t, inst), dv in zip(instances, d_vecs):
                    routed = jg.route_gradient(inst, dv.astype(np.float64), source_dims)
                    for src, g in routed.items():
                        m = src if jig_mode == "cujp" else MODALITIES[src]
                        d_latents[m][i, t] += weights.jigsaw * g
                grads["clf.w"] = weights.jigsaw * clf_grads["w"]
                grads["clf.b"] = weights.jigsaw * clf_grads["b"]
            elif classifier is not None:
                grads["clf.w"] = np.zeros_like(classifier.weights)
                grads["clf.b"] = np.zeros_like(classifier.bias)

            for m in MODALITIES:
                _, enc_grads = encoders[m].backward(forward[m][1], d_latents[m].astype(DTYPE))
                for k, g in enc_grads.items():
                    grads[f"enc_{m}.{k}"] = g

            total = (weights.contrast * (l_fine + l_coarse) + weights.jigsaw * l_cujp
                     + weights.recon * l_recon + weights.commit * l_commit)
            _finite("total", total, where)
            adam_step(adam, params, grads)

            for key, val in (("l_fine", l_fine), ("l_coarse", l_coarse), ("l_cujp", l_cujp),
                             ("l_recon", l_recon), ("l_commit", l_commit), ("total", total)):
                sums[key] += val
            n_steps += 1

        record = {"epoch": epoch}
        record.update({k: sums[k] / n_steps for k in sums})
        record["perplexity"] = cb.perplexity(sum(usage.values()))
        log.append(record)

    return PretrainResult(encoders=encoders, decoders=decoders, book=book,
                          classifier=classifier, universe=universe, log=log,
                          usage=usage, weights=weights)


# ---------------------------------------------------------------------------
# downstream probe and open-set evaluation


@dataclass
class ProbeHead:
    weights: np.ndarray   # (d_feat, n_known)
    bias: np.ndarray
    class_ids: list
    modality: str


def pooled_features(encoder: Mlp, x: np.ndarray, features: str = "continuous",
                    book: cb.Codebook | None = None) -> np.ndarray:
    """Mean-over-time latents, optionally through the codebook."""
    z = encoder.encode(x)
    if features == "quantized":
        if book is None:
            raise ConfigError("eval.features = quantized needs a codebook")
        z = cb.quantize(book, z).quantized
    return z.mean(axis=1)


def train_probe(encoder: Mlp, x: np.ndarray, labels: np.ndarray, class_ids,
                modality: str, epochs: int = 50, lr: float = 1e-2,
                features: str = "continuous", book: cb.Codebook | None = None) -> ProbeHead:
    """Cross-entropy linear head on frozen pooled latents.

    The encoder is only ever run forward; its parameters are untouched.
    """
    class_ids = [int(c) for c in class_ids]
    index_of = {c: i for i, c in enumerate(class_ids)}
    bad = set(int(v) for v in labels) - set(class_ids)
    if bad:
        raise DataError(f"probe labels outside the known class set: {sorted(bad)}")
    targets = np.array([index_of[int(v)] for v in labels], dtype=np.int64)
    feats = pooled_features(encoder, x, features, book)
    n, d = feats.shape
    head = {"w": np.zeros((d, len(class_ids)), dtype=DTYPE),
            "b": np.zeros(len(class_ids), dtype=DTYPE)}
    adam = AdamState.for_params(head, lr=lr)
    rows = np.arange(n)
    feats64 = feats.astype(np.float64)
    for _ in range(epochs):
        logits = feats64 @ head["w"].astype(np.float64) + head["b"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        d_logits = np.exp(logp)
        d_logits[rows, targets] -= 1.0
        d_logits /= n
        grads = {"w": (feats64.T @ d_logits).astype(DTYPE),
                 "b": d_logits.sum(axis=0).astype(DTYPE)}
        adam_step(adam, head, grads)
    return ProbeHead(weights=head["w"], bias=head["b"], class_ids=class_ids, modality=modality)


def probe_scores(head: ProbeHead, feats: np.ndarray):
    """(predicted class index, max-softmax confidence) per row, in float64."""
    logits = feats.astype(np.float64) @ head.weights.astype(np.float64) + head.bias
    probs = softmax(logits, axis=1)
    return probs.argmax(axis=1), probs.max(axis=1)


def calibrate_threshold(head: ProbeHead, encoder: Mlp, x: np.ndarray, labels: np.ndarray,
                        percentile: float, features: str = "continuous",
                        book: cb.Codebook | None = None) -> float:
    """Rejection threshold = the given percentile of correct-prediction
    confidences on held-out known validation data from the source modality."""
    feats = pooled_features(encoder, x, features, book)
    pred, conf = probe_scores(head, feats)
    index_of = {c: i for i, c in enumerate(head.class_ids)}
    truth = np.array([index_of[int(v)] for v in labels], dtype=np.int64)
    correct = conf[pred == truth]
    if correct.size == 0:
        return 0.0
    return float(np.percentile(correct, percentile))


def evaluate_openset(head: ProbeHead, encoder: Mlp, x_known: np.ndarray, y_known: np.ndarray,
                     x_unknown: np.ndarray | None, theta: float,
                     features: str = "continuous", book: cb.Codebook | None = None) -> dict:
    """Open-set metrics through the target modality's frozen encoder.

    Samples with max-softmax confidence below theta are predicted unknown.
    OS* is the macro mean of per-known-class accuracy (an unknown prediction
    on a known sample counts as an error); UNK is the fraction of
    unknown-split samples rejected. With no unknown split the report is
    closed-set: UNK and HOS are None.
    """
    feats = pooled_features(encoder, x_known, features, book)
    pred, conf = probe_scores(head, feats)
    index_of = {c: i for i, c in enumerate(head.class_ids)}
    truth = np.array([index_of[int(v)] for v in y_known], dtype=np.int64)
    accepted = conf >= theta
    correct = accepted & (pred == truth)
    per_class = {}
    for cls in head.class_ids:
        rows = truth == index_of[cls]
        if rows.any():
            per_class[cls] = 100.0 * float(correct[rows].mean())
    os_star = float(np.mean(list(per_class.values()))) if per_class else 0.0
    closed = 100.0 * float((pred == truth).mean())

    if x_unknown is None or len(x_unknown) == 0:
        return {"os_star": os_star, "unk": None, "hos": None,
                "per_class": per_class, "theta": theta, "closed_set_accuracy": closed}
    feats_u = pooled_features(encoder, x_unknown, features, book)
    _, conf_u = probe_scores(head, feats_u)
    unk = 100.0 * float((conf_u < theta).mean())
    return {"os_star": os_star, "unk": unk, "hos": hos_score(os_star, unk),
            "per_class": per_class, "theta": theta, "closed_set_accuracy": closed}


def threshold_sweep(head: ProbeHead, encoder: Mlp, x_known, y_known, x_unknown,
                    thetas, features: str = "continuous",
                    book: cb.Codebook | None = None) -> list:
    """Metrics at each threshold, reusing one forward pass."""
    feats = pooled_features(encoder, x_known, features, book)
    pred, conf = probe_scores(head, feats)
    index_of = {c: i for i, c in enumerate(head.class_ids)}
    truth = np.array([index_of[int(v)] for v in y_known], dtype=np.int64)
    feats_u = pooled_features(encoder, x_unknown, features, book)
    _, conf_u = probe_scores(head, feats_u)
    rows = []
    for theta in thetas:
        correct = (conf >= theta) & (pred == truth)
        accs = [100.0 * float(correct[truth == index_of[c]].mean())
                for c in head.class_ids if (truth == index_of[c]).any()]
        os_star = float(np.mean(accs)) if accs else 0.0
        unk = 100.0 * float((conf_u < theta).mean())
        rows.append({"theta": float(theta), "os_star": os_star, "unk": unk,
                     "hos": hos_score(os_star, unk)})
    return rows


def recall_from_features(feats_a: np.ndarray, feats_b: np.ndarray, ks) -> dict:
    """Cosine-similarity recall@K for both query directions.

    Rank counts strictly-greater similarities only, so exact duplicates of
    the true pair do not displace it.
    """
    corpus = feats_a.shape[0]
    for k in ks:
        if k > corpus:
            raise ConfigError(f"recall K = {k} exceeds corpus size {corpus}")
    fa = feats_a.astype(np.float64).copy()
    fb = feats_b.astype(np.float64).copy()
    fa /= np.sqrt((fa * fa).sum(axis=1, keepdims=True)) + 1e-12
    fb /= np.sqrt((fb * fb).sum(axis=1, keepdims=True)) + 1e-12
    sim = fa @ fb.T
    out = {}
    for name, mat in (("a_to_b", sim), ("b_to_a", sim.T)):
        diag = np.diag(mat)
        ranks = 1 + (mat > diag[:, None]).sum(axis=1)
        out[name] = {str(k): 100.0 * float((ranks <= k).mean()) for k in ks}
    return out


def retrieval_recall(enc_a: Mlp, enc_b: Mlp, x_a: np.ndarray, x_b: np.ndarray, ks,
                     features: str = "continuous", book: cb.Codebook | None = None) -> dict:
    """recall_from_features over pooled frozen latents of a paired test set."""
    return recall_from_features(
        pooled_features(enc_a, x_a, features, book),
        pooled_features(enc_b, x_b, features, book),
        ks,
    )


# ---------------------------------------------------------------------------
# full evaluation report


@dataclass
class EvalReport:
    direction: str
    source_modality: str
    target_modality: str
    target_encoder: str
    n_known_classes: int
    seed: int
    theta: float
    theta_percentile: float
    os_star: float
    unk: float | None
    hos: float | None
    closed_set_accuracy: float
    per_class: dict
    recall: dict
    perplexity: float
    coactivation_summary: dict
    field_order = (
        "direction", "source_modality", "target_modality", "target_encoder",
        "n_known_classes", "seed", "theta", "theta_percentile", "os_star", "unk",
        "hos", "closed_set_accuracy", "per_class", "recall", "perplexity",
        "coactivation_summary",
    )

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.field_order}

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n").encode()

    CSV_COLUMNS = ("direction", "n_known_classes", "seed", "theta", "os_star", "unk", "hos",
                   "closed_set_accuracy", "recall_a_to_b_1", "recall_b_to_a_1", "perplexity")

    def csv_row(self) -> list:
        def fmt(v):
            return "" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v))

        vals = [self.direction, self.n_known_classes, self.seed, self.theta, self.os_star,
                self.unk, self.hos, self.closed_set_accuracy,
                self.recall["a_to_b"]["1"], self.recall["b_to_a"]["1"], self.perplexity]
        return [fmt(v) for v in vals]


def codebook_statistics(result_encoders: dict, book: cb.Codebook, dataset: SynthDataset):
    """Assignment usage per modality over the pretrain split."""
    batch = dataset.batch("pretrain")
    x = {"a": batch.x_a, "b": batch.x_b}
    usage = {}
    for m in MODALITIES:
        z = result_encoders[m].encode(x[m])
        usage[m] = cb.usage_counts(cb.quantize(book, z).indices, book.size)
    return usage


def coactivation_summary(usage: dict) -> dict:
    rows = cb.coactivation(usage)
    counts = {"dead": 0, "single": 0, "shared": 0, "unified": 0}
    for row in rows:
        counts[row["class"]] += 1
    return counts


def run_eval(components: dict, dataset: SynthDataset, direction: str, cfg: dict) -> EvalReport:
    """Train the source-modality probe, calibrate, evaluate on the target."""
    if direction not in ("a2b", "b2a"):
        raise ConfigError(f"direction must be a2b or b2a, got {direction!r}")
    source, target = ("a", "b") if direction == "a2b" else ("b", "a")
    encoders = components["encoders"]
    book = components["book"]
    features = cfg["eval.features"]

    def side(batch, modality):
        return batch.x_a if modality == "a" else batch.x_b

    probe_train = dataset.batch("probe_train")
    probe_val = dataset.batch("probe_val")
    test_known = dataset.batch("test_known")
    test_unknown = dataset.batch("test_unknown")

    head = train_probe(encoders[source], side(probe_train, source), probe_train.labels,
                       dataset.known_classes, source, epochs=cfg["probe.epochs"],
                       lr=cfg["probe.lr"], features=features, book=book)
    theta = calibrate_threshold(head, encoders[source], side(probe_val, source),
                                probe_val.labels, cfg["eval.theta_percentile"],
                                features=features, book=book)
    metrics = evaluate_openset(head, encoders[target], side(test_known, target),
                               test_known.labels,
                               side(test_unknown, target) if test_unknown.n else None,
                               theta, features=features, book=book)

    paired_x_a = np.concatenate([test_known.x_a, test_unknown.x_a]) if test_unknown.n else test_known.x_a
    paired_x_b = np.concatenate([test_known.x_b, test_unknown.x_b]) if test_unknown.n else test_known.x_b
    recall = retrieval_recall(encoders["a"], encoders["b"], paired_x_a, paired_x_b,
                              cfg["eval.recall_ks"], features=features, book=book)

    usage = codebook_statistics(encoders, book, dataset)
    return EvalReport(
        direction=direction,
        source_modality=source,
        target_modality=target,
        target_encoder=f"encoder_{target}",
        n_known_classes=len(dataset.known_classes),
        seed=cfg["seed"],
        theta=float(theta),
        theta_percentile=cfg["eval.theta_percentile"],
        os_star=metrics["os_star"],
        unk=metrics["unk"],
        hos=metrics["hos"],
        closed_set_accuracy=metrics["closed_set_accuracy"],
        per_class={str(k): v for k, v in metrics["per_class"].items()},
        recall=recall,
        perplexity=cb.perplexity(sum(usage.values())),
        coactivation_summary=coactivation_summary(usage),
    )


# ---------------------------------------------------------------------------
# checkpoint IO


def save_components(dirpath, result: PretrainResult) -> None:
    os.makedirs(dirpath, exist_ok=True)
    entries = []

    def dump(module: str, modality: str, params: dict):
        for layer, arr in params.items():
            name = f"{module}_{modality}.{layer}" if modality else f"{module}.{layer}"
            save_tensor(os.path.join(dirpath, name), arr)
            entries.append({"module": module, "modality": modality, "layer": layer,
                            "shape": list(arr.shape), "file": name})

    for m in MODALITIES:
        dump("encoder", m, result.encoders[m].params())
        dump("decoder", m, result.decoders[m].params())
    if result.classifier is not None:
        dump("perm_classifier", "", result.classifier.params())
        np.save(os.path.join(dirpath, "universe.npy"), result.universe.perms)
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump({"entries": entries}, fh, indent=2, sort_keys=True)
    cb.save_codebook(os.path.join(dirpath, "codebook"), result.book)


def load_components(dirpath) -> dict:
    manifest_path = os.path.join(dirpath, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataError(f"no checkpoint manifest at {manifest_path}")
    with open(manifest_path) as fh:
        entries = json.load(fh)["entries"]
    groups: dict = {}
    for entry in entries:
        key = (entry["module"], entry["modality"])
        groups.setdefault(key, {})[entry["layer"]] = load_tensor(os.path.join(dirpath, entry["file"]))
    out = {"encoders": {}, "decoders": {}, "classifier": None}
    for (module, modality), params in groups.items():
        if module == "encoder":
            out["encoders"][modality] = Mlp.from_params(f"encoder_{modality}", params)
        elif module == "decoder":
            out["decoders"][modality] = Mlp.from_params(f"decoder_{modality}", params)
        elif module == "perm_classifier":
            clf = jg.PermClassifier(params["w"].shape[0], params["w"].shape[1])
            clf.set_params(params)
            out["classifier"] = clf
    out["book"] = cb.load_codebook(os.path.join(dirpath, "codebook"))
    return out
