"""Listwise preference optimisation for long-tail sequential recommendation."""

from .catalog import Catalog, build_catalog, head_size, is_tail
from .data import (DatasetSplits, InteractionRecord, SequenceExample, SyntheticSpec, build_splits,
                   core_filter, generate_synthetic, load_splits, parse_interactions, save_splits)
from .errors import LPORecError, ValidationError
from .estimator import LPORecommender
from .evaluation import MetricsReport, evaluate, prob_diagnostics
from .losses import LossConfig, ce_loss, dpo_loss, joint_loss, lpo_loss, reweight
from .model import ModelDims, ModelParams, encode, init_params, load_checkpoint, save_checkpoint
from .sampler import SamplingStrategy, sample_negatives
from .trainer import TrainConfig, pretrain_reference, train

__version__ = "0.1.0"

__all__ = [
    "Catalog", "DatasetSplits", "InteractionRecord", "LPORecError", "LPORecommender", "LossConfig",
    "MetricsReport", "ModelDims", "ModelParams", "SamplingStrategy", "SequenceExample",
    "SyntheticSpec", "TrainConfig", "ValidationError", "build_catalog", "build_splits",
    "ce_loss", "core_filter", "dpo_loss", "encode", "evaluate", "generate_synthetic", "head_size",
    "init_params", "is_tail", "joint_loss", "load_checkpoint", "load_splits", "lpo_loss",
    "parse_interactions", "pretrain_reference", "prob_diagnostics", "reweight", "sample_negatives",
    "save_checkpoint", "save_splits", "train",
]
