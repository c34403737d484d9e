from .autodiff import GraphConsumedError, Tensor, concat, leaf_grads, minimum, stop_gradient
from .layers import MLP, PolicyHead, QNetwork, sample_squashed
from .optim import Adam, AdamState, NonFiniteGradientError, optimizer_step
from .params import ParamSet, ShapeMismatchError, load_params, polyak_update, save_params

__all__ = [
    "Adam",
    "AdamState",
    "GraphConsumedError",
    "MLP",
    "NonFiniteGradientError",
    "ParamSet",
    "PolicyHead",
    "QNetwork",
    "ShapeMismatchError",
    "Tensor",
    "concat",
    "leaf_grads",
    "load_params",
    "minimum",
    "optimizer_step",
    "polyak_update",
    "sample_squashed",
    "save_params",
    "stop_gradient",
]
