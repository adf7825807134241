"""Attention-guided channel selection for multi-channel EEG epochs.

The package trains a small convolutional classifier with channel and spatial
attention on EEG epochs folded into 2-D images, reads gradient-weighted class
activation maps off the last convolution, ranks electrode channels by their
activation mass, and retrains on the top Q channels.  Everything runs on
numpy (plus scipy for filtering and fast matrix products) with a built-in
reverse-mode tape; no deep-learning framework is involved.
"""
from .attention import ChannelAttention, SpatialAttention
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcam import (
    ActivationMap,
    cam_intermediates,
    channel_weights,
    feature_gradient,
    hot_maps_for_dataset,
    load_map_csv,
    low_res_map,
    save_map_csv,
    save_map_pgm,
    to_hot,
)
from .model import (
    CnnCsaModel,
    FeatureCapture,
    count_flops,
    count_params,
    feature_shape,
    layer_plan,
)
from .optim import Adam
from .pipeline import DEFAULT_Q, PipelineResult, run_pipeline
from .preproc import (
    CHANNEL_NAMES,
    CLASS_NAMES,
    EegRecording,
    Epoch,
    EpochDataset,
    Segment,
    bandpass_filter,
    downsample,
    epoch,
    fold_to_image,
    load_epochs,
    load_recording,
    notch_filter,
    preprocess_recording,
    save_epochs,
    save_recording,
    unfold_image,
)
from .seeding import derive_rng
from .selection import (
    ChannelRanking,
    ClassActivationSet,
    average_class_maps,
    baseline_rank,
    load_ranking,
    rank_channels,
    reduce_dataset,
    save_ranking,
    select_top_q,
)
from .synthdata import SynthConfig, generate, ground_truth
from .tensor import Tensor, no_grad, softmax, softmax_cross_entropy
from .traineval import (
    EvalReport,
    TrainConfig,
    evaluate,
    load_report,
    macro_f1,
    predict,
    save_report,
    split,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "Adam",
    "CHANNEL_NAMES",
    "CLASS_NAMES",
    "ChannelAttention",
    "ChannelRanking",
    "ClassActivationSet",
    "CnnCsaModel",
    "DEFAULT_Q",
    "EegRecording",
    "Epoch",
    "EpochDataset",
    "EvalReport",
    "FeatureCapture",
    "PipelineResult",
    "Segment",
    "SpatialAttention",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "average_class_maps",
    "bandpass_filter",
    "baseline_rank",
    "cam_intermediates",
    "channel_weights",
    "count_flops",
    "count_params",
    "derive_rng",
    "downsample",
    "epoch",
    "evaluate",
    "feature_gradient",
    "feature_shape",
    "fold_to_image",
    "generate",
    "ground_truth",
    "hot_maps_for_dataset",
    "layer_plan",
    "load_checkpoint",
    "load_epochs",
    "load_map_csv",
    "load_ranking",
    "load_recording",
    "load_report",
    "low_res_map",
    "macro_f1",
    "no_grad",
    "notch_filter",
    "predict",
    "preprocess_recording",
    "rank_channels",
    "reduce_dataset",
    "run_pipeline",
    "save_checkpoint",
    "save_epochs",
    "save_map_csv",
    "save_map_pgm",
    "save_ranking",
    "save_recording",
    "save_report",
    "select_top_q",
    "softmax",
    "softmax_cross_entropy",
    "split",
    "to_hot",
    "train",
    "unfold_image",
]
