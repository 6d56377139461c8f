"""A small numpy neural-network engine: layers, Adam, losses and FGSM."""

from .data import (Dataset, load_idx, make_blobs, make_moons, make_patterns, make_xor,
                   read_csv, read_idx, write_csv, write_idx)
from .layers import softmax
from .losses import (CrossEntropy, KLDivergence, MeanSquared, cross_entropy_loss,
                     kl_divergence_loss, mse_loss)
from .network import Network
from .optim import Adam, StepDecay
from .train import (History, TrainConfig, accuracy, evaluate_loss, fgsm, input_gradient, train,
                    train_with_history)

__all__ = [
    "Adam", "CrossEntropy", "Dataset", "History", "KLDivergence", "MeanSquared", "Network",
    "StepDecay", "TrainConfig", "accuracy", "cross_entropy_loss", "evaluate_loss", "fgsm",
    "input_gradient", "kl_divergence_loss", "load_idx", "make_blobs", "make_moons",
    "make_patterns", "make_xor", "mse_loss", "read_csv", "read_idx", "softmax", "train",
    "train_with_history", "write_csv", "write_idx",
]
