import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

DESK_OVERRIDES = {
    "seed": 11,
    "gen.n_classes": 6,
    "gen.n_known": 3,
    "gen.samples_per_class": 20,
    "gen.d_in_a": 12,
    "gen.d_in_b": 12,
    "model.d_latent": 16,
    "model.d_hidden": 32,
    "codebook.size": 32,
    "train.epochs": 2,
    "train.batch_size": 30,
    "probe.epochs": 30,
}


def desk_config(**extra):
    from unirep.config import load_config

    overrides = dict(DESK_OVERRIDES)
    overrides.update(extra)
    return load_config(overrides=overrides)
