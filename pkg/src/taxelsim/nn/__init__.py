"""Minimal numpy neural toolkit: the feature-to-taxel regressor and the sequence classifier."""

from .core import (
    AdamState,
    PlateauSchedule,
    TrainConfig,
    adamw_step,
    clip_grad_norm,
    cross_entropy,
    l1_loss,
    plateau_schedule,
    softmax,
)
from .mlp import MlpParams, backward, load_mlp, mlp_forward, predict_digitac, save_mlp, train_digitac
from .transformer import (
    ClassifierConfig,
    ClassifierParams,
    classifier_forward,
    evaluate,
    load_classifier,
    save_classifier,
    train_classifier,
)
