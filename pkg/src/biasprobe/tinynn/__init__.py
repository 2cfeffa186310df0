"""From-scratch, deterministic CNN engine: layers, builders, optimizers,
training, checkpoints and gradient checking."""

from .builders import LayerSpec, ModelConfig, build_densenet, build_network, build_resnet, he_init, shape_chain
from .checkpoint import Checkpoint, checkpoint_from_network, load_checkpoint, network_from_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    BatchNorm2d,
    Conv2d,
    FullyConnected,
    GlobalAvgPool,
    MaxPool2d,
    Network,
    ReLU,
    conv2d_backward,
    conv2d_forward,
    softmax,
    softmax_cross_entropy,
)
from .optim import Adam, SGDMomentum, adam_step, make_optimizer, sgd_momentum_step
from .train import (
    EpochMetric,
    EvalResult,
    TrainConfig,
    TrainingDiverged,
    evaluate,
    evaluate_network,
    metrics_to_csv,
    train,
)

__all__ = [
    "Adam", "BatchNorm2d", "Checkpoint", "Conv2d", "EpochMetric", "EvalResult",
    "FullyConnected", "GlobalAvgPool", "GradCheckReport", "LayerSpec", "MaxPool2d",
    "ModelConfig", "Network", "ReLU", "SGDMomentum", "TrainConfig", "TrainingDiverged",
    "adam_step", "build_densenet", "build_network", "build_resnet",
    "checkpoint_from_network", "conv2d_backward", "conv2d_forward", "evaluate",
    "evaluate_network", "grad_check", "he_init", "load_checkpoint", "make_optimizer",
    "metrics_to_csv", "network_from_checkpoint", "save_checkpoint", "sgd_momentum_step",
    "shape_chain", "softmax", "softmax_cross_entropy", "train",
]
