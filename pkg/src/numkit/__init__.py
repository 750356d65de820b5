from src.numkit.distributions import (
    DiagGaussian,
    SimplexVector,
    entropy_categorical,
    gaussian_entropy,
    kl_categorical,
    log_softmax,
    softmax,
    softmax_backward,
)
from src.numkit.nets import DenseNet, NetGrads, backward, forward
from src.numkit.optim import Adam, polyak, sgd_step
from src.numkit.rng import SeededRng, stable_seed

__all__ = [
    "Adam",
    "DenseNet",
    "DiagGaussian",
    "NetGrads",
    "SeededRng",
    "SimplexVector",
    "backward",
    "entropy_categorical",
    "forward",
    "gaussian_entropy",
    "kl_categorical",
    "log_softmax",
    "polyak",
    "sgd_step",
    "softmax",
    "softmax_backward",
    "stable_seed",
]
