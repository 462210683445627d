"""Game-agnostic team discrimination via pixel-wise associative embeddings.

A small fully-convolutional network predicts, per pixel, a player
probability and a D-dimensional embedding trained only through relational
pull/push losses; a greedy clustering step turns the embeddings into a
two-team occupancy map. Synthetic sport scenes, a color-histogram
baseline, and a grouped k-fold harness round out the package.
"""

from .baseline import DPGMMModel, axis_filtered_pixels, baseline_assign, fit_dpgmm, rgb_histogram
from .clustering import ClusterResult, cluster_teams, neighborhood_variance
from .color import color_jitter, delta_e
from .config import RunConfig, parse_config_file, scene_config, write_config
from .data import (
    AugmentedScene,
    MaskPyramid,
    PlayerAnnotation,
    Scene,
    SceneConfig,
    augment,
    compose_scene_masks,
    downsample_mask,
    generate_corpus,
    generate_scene,
    load_corpus,
    rasterize_player,
)
from .evaluation import (
    EvalCounts,
    ExperimentResult,
    FoldSplit,
    MetricsReport,
    compute_metrics,
    evaluate_baseline,
    evaluate_embedding,
    kfold_split,
    match_player,
    run_experiment,
)
from .gradcheck import grad_check
from .losses import Centroids, LossWeights, TeamPixelSets, pull_loss, push_loss, seg_loss, total_loss
from .net import NetOutputs, TeamNet
from .optim import AdamState, TrainSchedule, adam_step, poly_lr
from .serialize import load_checkpoint, load_dump, save_checkpoint, save_dump
from .tensor import Tensor, avgpool2d, channel_slice, conv2d, gather_pixels, maxpool2d, upsample
from .train import TrainedModel, train_model, validation_iou

__version__ = "0.1.0"
