"""Loss functions for the reward critic, CQL term, intervention critic and actor.

Each function takes already-evaluated tensors so it can be checked in
isolation; :mod:`egpo.learner.agent` wires them to the networks.
"""

from __future__ import annotations

import numpy as np

from ..nn.autodiff import Tensor, as_tensor


def td_target(reward, next_q, next_log_prob, gamma: float, alpha: float, done) -> np.ndarray:
    """Entropy-regularized bootstrap target ``r + (1-done) gamma (Q' - alpha log pi')``."""
    reward = np.asarray(reward, dtype=np.float64)
    cont = 1.0 - np.asarray(done, dtype=np.float64)
    soft_v = np.asarray(next_q, dtype=np.float64) - alpha * np.asarray(next_log_prob, dtype=np.float64)
    return reward + cont * gamma * soft_v


def critic_loss(q_pred: Tensor, target) -> Tensor:
    """``0.5 * mean((y - Q)^2)`` with the target treated as a constant."""
    if q_pred.data.size == 0:
        raise ValueError("empty batch")
    y = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=q_pred.dtype)
    err = q_pred - y
    return (err * err).mean() * 0.5


def cql_penalty(q_policy: Tensor | None, q_expert: Tensor | None, beta: float) -> Tensor:
    """``beta * (mean Q(s, a~pi) - mean Q(s, a~E))`` over takeover states; 0 when empty."""
    if q_policy is None or q_expert is None or q_policy.data.size == 0 or beta == 0.0:
        return as_tensor(0.0)
    return (q_policy.mean() - q_expert.mean()) * beta


def cql_critic_loss(q_pred: Tensor, target, q_policy: Tensor | None, q_expert: Tensor | None,
                    beta: float) -> Tensor:
    td = critic_loss(q_pred, target)
    if q_policy is None or beta == 0.0:
        return td
    return cql_penalty(q_policy, q_expert, beta) + td


def actor_loss(q_value: Tensor, log_prob: Tensor, alpha: float) -> Tensor:
    """``-mean(Q(s, a_theta) - alpha log pi(a_theta|s))``."""
    return (log_prob * alpha - q_value).mean()


def intervention_penalty_loss(qc_value: Tensor, limit: float) -> Tensor:
    """``mean(Q^C(s, a_theta) - C)``."""
    return (qc_value - limit).mean()


def combined_actor_loss(q_value: Tensor, log_prob: Tensor, qc_value: Tensor | None,
                        alpha: float, lam: float, limit: float) -> Tensor:
    base = actor_loss(q_value, log_prob, alpha)
    if qc_value is None or lam == 0.0:
        return base
    return base + intervention_penalty_loss(qc_value, limit) * lam
