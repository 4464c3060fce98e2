"""Two-pass handwritten-digit classifier.

A coarse MLP over 24 global shadow features classifies every sample;
classes it confuses are clustered into groups, and a per-group expert
MLP refines those decisions using longest-run features from windows
chosen by a genetic algorithm.
"""

from .datasets import LabeledImage, SplitSpec, load_dir, load_idx, split, synth_digits
from .evolution import Chromosome, GaConfig, run_ga
from .featurizer import (
    FeatureBank,
    assemble_features,
    build_feature_bank,
    longest_run_window,
    shadow_features,
    window_table,
)
from .grouping import GroupTable, form_groups, mutual_confusion
from .neuralnet import (
    MlpModel,
    Topology,
    TrainConfig,
    accuracy,
    confusion,
    forward,
    init_model,
    predict,
    train,
)
from .raster import BinaryImage, GrayImage, binarize, normalize, otsu_threshold
from .twopass import PipelineConfig, PipelineModel, classify, evaluate, train_pipeline

__version__ = "0.1.0"

__all__ = [
    "BinaryImage",
    "Chromosome",
    "FeatureBank",
    "GaConfig",
    "GrayImage",
    "GroupTable",
    "LabeledImage",
    "MlpModel",
    "PipelineConfig",
    "PipelineModel",
    "SplitSpec",
    "Topology",
    "TrainConfig",
    "accuracy",
    "assemble_features",
    "binarize",
    "build_feature_bank",
    "classify",
    "confusion",
    "evaluate",
    "form_groups",
    "forward",
    "init_model",
    "load_dir",
    "load_idx",
    "longest_run_window",
    "mutual_confusion",
    "normalize",
    "otsu_threshold",
    "predict",
    "run_ga",
    "shadow_features",
    "split",
    "synth_digits",
    "train",
    "train_pipeline",
    "window_table",
]
