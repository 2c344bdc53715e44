"""Differentiable object counting from attention weights and overlapping boxes."""

from .autodiff import GradReport, Var, backward, check_gradients
from .checkpoint import Checkpoint
from .counter import Box, ComponentTrace, forward, iou
from .plin import PlinBank, PlinFunction, plin_eval, plin_eval_matrix, plin_gradients
from .toygen import ToyConfig, ToySample, generate_batch, generate_sample
from .trainers import ModelKind, TrainConfig, evaluate, train

__all__ = [
    "Box", "Checkpoint", "ComponentTrace", "GradReport", "ModelKind", "PlinBank", "PlinFunction",
    "ToyConfig", "ToySample", "TrainConfig", "Var", "backward", "check_gradients", "evaluate", "forward",
    "generate_batch", "generate_sample", "iou", "plin_eval", "plin_eval_matrix", "plin_gradients", "train",
]
