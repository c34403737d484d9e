"""Soft actor-critic learner with the CQL takeover term and intervention Lagrangian."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..nn import Adam, PolicyHead, QNetwork, leaf_grads, minimum, polyak_update
from ..nn.optim import NonFiniteGradientError
from .buffer import Batch, ReplayBuffer
from .lagrangian import LagrangianState, PIDGains, pid_update_lambda
from .losses import combined_actor_loss, cql_critic_loss, critic_loss, td_target

log = logging.getLogger(__name__)


class NonFiniteTrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 0.2
    beta: float = 3.0
    limit: float = 20.0
    kp: float = 5.0
    ki: float = 0.01
    kd: float = 0.1
    learning_rate: float = 1e-4
    warmup_steps: int = 10_000
    horizon: int = 1500
    batch_size: int = 256
    demo_batch_size: int = 64
    cql_samples: int = 4
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "tanh"
    buffer_capacity: int = 1_000_000
    updates_per_step: float = 1.0
    iteration_steps: int = 500
    integral_limit_factor: float = 10.0
    # "intervention" (EGPO), "cost" (SAC-Lag) or "none" (plain SAC / CQL)
    constraint: str = "intervention"
    # "pid", "integral" (ablation without P and D terms) or "frozen" (lambda fixed)
    lambda_mode: str = "pid"
    lambda_init: float = 0.0
    discount_constraint: bool = False
    # upper bound applied to the multiplier after each PID update; None leaves it unbounded
    lambda_max: float | None = None

    def __post_init__(self):
        if self.constraint not in ("intervention", "cost", "none"):
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if self.lambda_mode not in ("pid", "integral", "frozen"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")

    @property
    def gains(self) -> PIDGains:
        g = PIDGains(self.kp, self.ki, self.kd, self.integral_limit_factor * self.limit)
        return g.integral_only() if self.lambda_mode == "integral" else g

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class Networks:
    policy: PolicyHead
    q1: QNetwork
    q2: QNetwork
    q1_target: QNetwork
    q2_target: QNetwork
    qc: QNetwork | None = None
    qc_target: QNetwork | None = None

    def param_sets(self) -> dict:
        out = {"policy": self.policy.params, "q1": self.q1.params, "q2": self.q2.params,
               "q1_target": self.q1_target.params, "q2_target": self.q2_target.params}
        if self.qc is not None:
            out["qc"] = self.qc.params
            out["qc_target"] = self.qc_target.params
        return out


def build_networks(obs_dim: int, act_dim: int, cfg: LearnerConfig, rng: np.random.Generator,
                   dtype=np.float32) -> Networks:
    def q():
        return QNetwork(obs_dim, act_dim, cfg.hidden, cfg.activation, rng, dtype)

    policy = PolicyHead(obs_dim, act_dim, cfg.hidden, cfg.activation, rng, dtype)
    q1, q2 = q(), q()
    q1_t, q2_t = q(), q()
    q1_t.params.assign(q1.params)
    q2_t.params.assign(q2.params)
    nets = Networks(policy, q1, q2, q1_t, q2_t)
    if cfg.constraint != "none":
        nets.qc, nets.qc_target = q(), q()
        nets.qc_target.params.assign(nets.qc.params)
    return nets


@dataclass
class StreamSet:
    """Independent random streams so optional components never shift each other."""

    batch: np.random.Generator
    target: np.random.Generator
    actor: np.random.Generator
    cql: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "StreamSet":
        ss = np.random.SeedSequence([seed, 0xE6F0])
        return cls(*(np.random.default_rng(s) for s in ss.spawn(4)))


class Learner:
    """Owns every network, optimizer and the multiplier state of one run."""

    def __init__(self, obs_dim: int, act_dim: int, config: LearnerConfig, seed: int = 0,
                 dtype=np.float32):
        self.config = config
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        init_rng = np.random.default_rng([seed, 0x1417])
        self.nets = build_networks(obs_dim, act_dim, config, init_rng, dtype)
        lr = config.learning_rate
        self.policy_opt = Adam(self.nets.policy.params, lr)
        self.q1_opt = Adam(self.nets.q1.params, lr)
        self.q2_opt = Adam(self.nets.q2.params, lr)
        self.qc_opt = Adam(self.nets.qc.params, lr) if self.nets.qc is not None else None
        self.streams = StreamSet.from_seed(seed)
        self.lagrangian = LagrangianState(lam=config.lambda_init)
        self.skipped_actor_steps = 0
        self.gradient_steps = 0

    @property
    def policy(self) -> PolicyHead:
        return self.nets.policy

    @property
    def lam(self) -> float:
        return self.lagrangian.lam

    # -- pieces ----------------------------------------------------------

    def _bootstrap(self, b: Batch):
        cfg = self.config
        noise = self.streams.target.standard_normal((len(b), self.act_dim))
        next_a, next_logp = self.nets.policy.sample_np(b.next_obs, noise)
        q_next = np.minimum(self.nets.q1_target.predict(b.next_obs, next_a),
                            self.nets.q2_target.predict(b.next_obs, next_a))
        y = td_target(b.reward, q_next, next_logp, cfg.gamma, cfg.alpha, b.done)
        return y, next_a

    def _cql_actions(self, demo: Batch):
        """Fresh policy and expert action samples at takeover states."""
        k = self.config.cql_samples
        obs = np.repeat(demo.obs, k, axis=0)
        rng = self.streams.cql
        a_pi, _ = self.nets.policy.sample_np(obs, rng.standard_normal((len(obs), self.act_dim)))
        mean = np.repeat(demo.expert_mean, k, axis=0)
        std = np.repeat(demo.expert_std, k, axis=0)
        a_e = np.tanh(mean + std * rng.standard_normal(mean.shape))
        return obs, a_pi.astype(obs.dtype), a_e.astype(obs.dtype)

    def critic_update(self, b: Batch, demo: Batch | None, y: np.ndarray) -> dict:
        cfg = self.config
        n = len(b)
        use_cql = demo is not None and cfg.beta != 0.0
        if use_cql:
            d_obs, a_pi, a_e = self._cql_actions(demo)
            m = len(d_obs)
            obs = np.concatenate([b.obs, d_obs, d_obs])
            act = np.concatenate([b.applied_action, a_pi, a_e])
        else:
            obs, act = b.obs, b.applied_action
        losses, gaps = [], []
        for q, opt in ((self.nets.q1, self.q1_opt), (self.nets.q2, self.q2_opt)):
            leaves = q.params.leaves()
            out = q(obs, act, leaves)
            if use_cql:
                q_pi = out[n:n + m]
                q_e = out[n + m:]
                loss = cql_critic_loss(out[:n], y, q_pi, q_e, cfg.beta)
                gaps.append(float(q_e.data.mean() - q_pi.data.mean()))
            else:
                loss = critic_loss(out, y)
            loss.backward()
            opt.step(leaf_grads(leaves))
            losses.append(loss.item())
        return {"critic_loss": float(np.mean(losses)),
                "cql_gap": float(np.mean(gaps)) if gaps else 0.0}

    def intervention_critic_update(self, b: Batch, next_a: np.ndarray) -> dict:
        """TD update of Q^C on the agent's own action; no entropy term in the target."""
        cfg = self.config
        qc, qc_t = self.nets.qc, self.nets.qc_target
        signal = b.intervention if cfg.constraint == "intervention" else b.cost
        yc = signal + (1.0 - b.done) * cfg.gamma * qc_t.predict(b.next_obs, next_a)
        act = b.agent_action if cfg.constraint == "intervention" else b.applied_action
        leaves = qc.params.leaves()
        loss = critic_loss(qc(b.obs, act, leaves), yc)
        loss.backward()
        self.qc_opt.step(leaf_grads(leaves))
        return {"qc_loss": loss.item()}

    def actor_update(self, b: Batch) -> dict:
        cfg = self.config
        pol = self.nets.policy
        leaves = pol.params.leaves()
        noise = self.streams.actor.standard_normal((len(b), self.act_dim))
        a, logp = pol.sample(b.obs, noise, leaves)
        q_val = minimum(self.nets.q1(b.obs, a), self.nets.q2(b.obs, a))
        lam = self.lagrangian.lam
        qc_val = None
        if self.nets.qc is not None and lam != 0.0:
            qc_val = self.nets.qc(b.obs, a)
        loss = combined_actor_loss(q_val, logp, qc_val, cfg.alpha, lam, cfg.limit)
        if not np.isfinite(loss.data):
            self.skipped_actor_steps += 1
            log.warning("non-finite actor loss; step skipped")
            return {"actor_loss": float("nan"), "entropy": float("nan")}
        loss.backward()
        try:
            self.policy_opt.step(leaf_grads(leaves))
        except NonFiniteGradientError:
            self.skipped_actor_steps += 1
            log.warning("non-finite actor gradient; step skipped")
        return {"actor_loss": loss.item(), "entropy": float(-logp.data.mean())}

    def soft_update(self) -> None:
        tau = self.config.tau
        polyak_update(self.nets.q1_target.params, self.nets.q1.params, tau)
        polyak_update(self.nets.q2_target.params, self.nets.q2.params, tau)
        if self.nets.qc is not None:
            polyak_update(self.nets.qc_target.params, self.nets.qc.params, tau)

    # -- one gradient step -------------------------------------------------

    def update(self, buffer: ReplayBuffer, demo_buffer: ReplayBuffer | None = None) -> dict:
        cfg = self.config
        b = buffer.sample(cfg.batch_size, self.streams.batch)
        demo = None
        if cfg.beta != 0.0:
            demo = (demo_buffer or buffer).sample_demo(cfg.demo_batch_size, self.streams.batch)
        y, next_a = self._bootstrap(b)
        metrics = self.critic_update(b, demo, y)
        if self.nets.qc is not None:
            metrics.update(self.intervention_critic_update(b, next_a))
        metrics.update(self.actor_update(b))
        self.soft_update()
        self.gradient_steps += 1
        self.check_finite()
        return metrics

    def check_finite(self) -> None:
        for name, ps in self.nets.param_sets().items():
            if not ps.all_finite():
                raise NonFiniteTrainingError(f"non-finite parameters in {name}")

    def update_lambda(self, mean_episodic_signal: float | None) -> LagrangianState:
        """Once per iteration. ``None`` (no finished episode) reuses the previous delta."""
        cfg = self.config
        if cfg.lambda_mode == "frozen" or self.nets.qc is None:
            return self.lagrangian
        if mean_episodic_signal is None:
            mean_episodic_signal = self.lagrangian.prev_delta + cfg.limit
        st = pid_update_lambda(self.lagrangian, mean_episodic_signal, cfg.limit, cfg.gains)
        if cfg.lambda_max is not None and st.lam > cfg.lambda_max:
            st = replace(st, lam=cfg.lambda_max)
        self.lagrangian = st
        return self.lagrangian
