"""Multilayer perceptrons, the squashed-Gaussian policy head and Q heads."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .autodiff import Tensor, as_tensor, concat
from .params import ParamSet

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)

_ACTIVATIONS = {
    "tanh": Tensor.tanh,
    "relu": Tensor.relu,
    "identity": lambda t: t,
}


class MLP:
    """Dense feed-forward network ``x -> act(W_k ... act(W_0 x + b_0) ...) + b_k``.

    Weights are stored as ``(fan_in, fan_out)`` so a batch ``(n, fan_in)``
    multiplies on the left. The output layer has no activation.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
        dtype=np.float32,
        out_scale: float = 1.0,
    ):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.dtype = np.dtype(dtype)
        self.params = ParamSet()
        n_layers = len(sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            if i == n_layers - 1:
                bound *= out_scale
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype)
            self.params.add(f"W{i}", w)
            self.params.add(f"b{i}", np.zeros(fan_out, dtype=self.dtype))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def __call__(self, x, leaves: dict[str, Tensor] | None = None) -> Tensor:
        return self.forward(x, leaves)

    def forward(self, x, leaves: dict[str, Tensor] | None = None) -> Tensor:
        """Evaluate the network.

        ``leaves`` are tensors wrapping this network's parameters; pass
        ``self.params.leaves()`` to get gradients. Without them the
        parameters enter as constants.
        """
        if leaves is None:
            leaves = self.params.leaves(requires_grad=False)
        h = as_tensor(x, self.dtype)
        if h.shape[-1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[-1]} != first layer {self.sizes[0]}")
        act = _ACTIVATIONS[self.activation]
        for i in range(self.n_layers):
            h = h @ leaves[f"W{i}"] + leaves[f"b{i}"]
            if i < self.n_layers - 1:
                h = act(h)
        return h

    def predict(self, x) -> np.ndarray:
        """Forward pass on plain arrays without building a graph."""
        h = np.asarray(x, dtype=self.dtype)
        p = self.params
        for i in range(self.n_layers):
            h = h @ p[f"W{i}"] + p[f"b{i}"]
            if i < self.n_layers - 1:
                if self.activation == "tanh":
                    h = np.tanh(h)
                elif self.activation == "relu":
                    h = np.maximum(h, 0)
        return h


def squash_log_jacobian(u: Tensor) -> Tensor:
    """``log(1 - tanh(u)^2)`` written as ``2 (log 2 - u - softplus(-2u))``."""
    return (_LOG2 - u - (u * -2.0).softplus()) * 2.0


class PolicyHead:
    """Squashed-Gaussian policy: ``a = tanh(mu + sigma * xi)``, ``xi ~ N(0, I)``."""

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        hidden: Sequence[int] = (256, 256),
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
        dtype=np.float32,
        log_std_bounds: tuple[float, float] = (LOG_STD_MIN, LOG_STD_MAX),
    ):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.log_std_bounds = log_std_bounds
        self.net = MLP([obs_dim, *hidden, 2 * act_dim], activation, rng, dtype, out_scale=0.1)

    @property
    def params(self) -> ParamSet:
        return self.net.params

    @property
    def dtype(self):
        return self.net.dtype

    def dist(self, obs, leaves=None) -> tuple[Tensor, Tensor]:
        """Return pre-squash ``(mean, log_std)`` tensors."""
        out = self.net(obs, leaves)
        mean = out[..., : self.act_dim]
        log_std = out[..., self.act_dim:].clip(*self.log_std_bounds)
        return mean, log_std

    def sample(self, obs, noise: np.ndarray, leaves=None) -> tuple[Tensor, Tensor]:
        """Reparameterized sample and its log-density (squash correction included).

        ``noise`` is the standard-normal draw with the same shape as the
        action batch; supplying it explicitly keeps every random stream
        under the caller's control.
        """
        mean, log_std = self.dist(obs, leaves)
        noise = np.asarray(noise, dtype=self.dtype)
        u = mean + log_std.exp() * noise
        gauss = (-0.5 * noise * noise - _HALF_LOG_2PI) - log_std
        log_prob = (gauss - squash_log_jacobian(u)).sum(axis=-1)
        return u.tanh(), log_prob

    def log_prob(self, obs, actions: np.ndarray, leaves=None, eps: float = 1e-6) -> Tensor:
        """Log-density of given squashed actions."""
        mean, log_std = self.dist(obs, leaves)
        a = np.clip(np.asarray(actions, dtype=self.dtype), -1 + eps, 1 - eps)
        u = np.arctanh(a)
        z = (as_tensor(u, self.dtype) - mean) * (-log_std).exp()
        gauss = z * z * -0.5 - _HALF_LOG_2PI - log_std
        jac = np.log1p(-a * a)
        return (gauss - jac).sum(axis=-1)

    def sample_np(self, obs: np.ndarray, noise: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Graph-free version of :meth:`sample` for bootstrap targets."""
        out = self.net.predict(obs)
        mean = out[..., : self.act_dim]
        log_std = np.clip(out[..., self.act_dim:], *self.log_std_bounds)
        noise = np.asarray(noise, dtype=self.dtype)
        u = mean + np.exp(log_std) * noise
        jac = 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))
        log_prob = np.sum(-0.5 * noise * noise - _HALF_LOG_2PI - log_std - jac, axis=-1)
        return np.tanh(u), log_prob

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        """Numpy-only action selection for rollouts."""
        out = self.net.predict(obs)
        mean = out[..., : self.act_dim]
        if deterministic:
            return np.tanh(mean)
        log_std = np.clip(out[..., self.act_dim:], *self.log_std_bounds)
        xi = rng.standard_normal(mean.shape).astype(self.dtype)
        return np.tanh(mean + np.exp(log_std) * xi)


def sample_squashed(policy: PolicyHead, obs, rng: np.random.Generator, leaves=None):
    """Draw ``(action, log_prob)`` with reparameterized noise from ``rng``."""
    obs_arr = np.asarray(obs, dtype=policy.dtype)
    batch_shape = obs_arr.shape[:-1]
    noise = rng.standard_normal((*batch_shape, policy.act_dim))
    return policy.sample(obs_arr, noise, leaves)


class QNetwork:
    """State-action value head ``Q(s, a)`` on the concatenated input."""

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        hidden: Sequence[int] = (256, 256),
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.net = MLP([obs_dim + act_dim, *hidden, 1], activation, rng, dtype)

    @property
    def params(self) -> ParamSet:
        return self.net.params

    def __call__(self, obs, act, leaves=None) -> Tensor:
        x = concat([as_tensor(obs, self.net.dtype), as_tensor(act, self.net.dtype)], axis=-1)
        return self.net(x, leaves)[..., 0]

    def predict(self, obs, act) -> np.ndarray:
        return self.net.predict(np.concatenate([obs, act], axis=-1))[..., 0]
