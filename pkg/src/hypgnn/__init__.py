"""Graph neural networks on Euclidean, Poincaré-ball and Lorentz manifolds."""

from .autodiff import DomainError, NonFiniteError, ShapeError, Tensor, backward
from .datasets import Dataset, GenSpec, build_dataset
from .graph import Graph, normalize_adjacency
from .layers import HGNN, ModelConfig, make_batch, propagate
from .manifolds import Euclidean, Lorentz, PoincareBall, get_manifold
from .optim import AMSGrad, RiemannianAMSGrad
from .training import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train

__all__ = [
    "AMSGrad", "Dataset", "DomainError", "Euclidean", "GenSpec", "Graph", "HGNN", "Lorentz",
    "ModelConfig", "NonFiniteError", "PoincareBall", "RiemannianAMSGrad", "ShapeError", "Tensor",
    "TrainConfig", "backward", "build_dataset", "evaluate", "get_manifold", "load_checkpoint",
    "make_batch", "normalize_adjacency", "propagate", "save_checkpoint", "train",
]
__version__ = "0.1.0"
