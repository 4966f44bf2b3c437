"""Unified-representation training on paired modalities with open-set evaluation."""

from .codebook import Codebook, commit_loss, ema_update, perplexity, quantize, straight_through
from .contrastive import ContrastConfig, MaskPlan, coarse_loss, fine_loss, make_masks, total_contrast
from .encoders import AdamState, Mlp, adam_step, reconstruction_loss
from .errors import ConfigError, DataError, NumericalError, ShapeError
from .jigsaw import PermClassifier, PermutationUniverse, build_universe, compose_instance, jigsaw_loss
from .pipeline import EvalReport, LossWeights, evaluate_openset, hos_score, pretrain, retrieval_recall, run_eval, train_probe
from .synthdata import GenSpec, ModalBatch, SynthDataset, class_split, generate
from .tensors import DTYPE, SeededRng, log_softmax, matmul

__version__ = "0.1.0"
