"""Checkpoint loading and guardian-free evaluation."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..expert import ExpertPolicy
from ..nn import PolicyHead, ShapeMismatchError, load_params
from ..sim.env import DrivingEnv, Termination
from .config import RunConfig, resolve_method
from .metrics import EpisodeStats, MetricsRecord
from .train import SceneBank, evaluate_policy


class CheckpointMismatchError(ValueError):
    pass


def load_policy(checkpoint: str | Path, cfg: RunConfig | None = None) -> PolicyHead:
    """Rebuild the policy head stored in ``checkpoint``.

    When ``cfg`` is given, its observation size and network shape must match
    the checkpoint metadata.
    """
    path = Path(checkpoint)
    meta_path = Path(str(path) + ".json")
    if not meta_path.exists():
        raise CheckpointMismatchError(f"missing checkpoint metadata {meta_path}")
    meta = json.loads(meta_path.read_text())
    hidden = tuple(meta["hidden"])
    if cfg is not None:
        lc, _ = resolve_method(cfg)
        expected = (cfg.env.obs_dim, tuple(lc.hidden), lc.activation)
        found = (meta["obs_dim"], hidden, meta["activation"])
        if expected != found:
            raise CheckpointMismatchError(
                f"config expects (obs_dim, hidden, activation) = {expected}, checkpoint has {found}")
    groups = load_params(path)
    if "policy" not in groups:
        raise CheckpointMismatchError("checkpoint holds no policy parameters")
    stored = groups["policy"]
    dtype = next(iter(stored.values())).dtype
    policy = PolicyHead(meta["obs_dim"], 2, hidden, meta["activation"], np.random.default_rng(0), dtype)
    try:
        policy.params.check_compatible(stored)
    except ShapeMismatchError as exc:
        raise CheckpointMismatchError(str(exc)) from exc
    policy.params.assign(stored)
    return policy


def evaluate(checkpoint: str | Path, cfg: RunConfig, seeds: list[int] | None = None,
             n_episodes: int | None = None) -> MetricsRecord:
    """Deterministic (mean-action) evaluation with the guardian off."""
    policy = load_policy(checkpoint, cfg)
    return evaluate_act_fn(lambda o: policy.act(o, deterministic=True).astype(np.float64),
                           cfg, seeds, n_episodes)


def evaluate_act_fn(act_fn, cfg: RunConfig, seeds: list[int] | None = None,
                    n_episodes: int | None = None) -> MetricsRecord:
    lc, _ = resolve_method(cfg)
    seeds = seeds if seeds is not None else cfg.test_scenes.seeds
    n = n_episodes if n_episodes is not None else len(seeds)
    eps = evaluate_policy(act_fn, SceneBank(seeds, cfg.scene), n, replace(cfg.env, horizon=lc.horizon))
    return MetricsRecord.from_episodes(0, "test", eps)


def evaluate_expert(cfg: RunConfig, seeds: list[int] | None = None, n_episodes: int | None = None,
                    deterministic: bool = False, seed: int = 0) -> MetricsRecord:
    """Evaluate the scripted expert on its own (calibration reference)."""
    lc, _ = resolve_method(cfg)
    env_cfg = replace(cfg.env, horizon=lc.horizon)
    expert = ExpertPolicy(cfg.expert, env_cfg)
    rng = np.random.default_rng([seed, 0xE7A1])
    seeds = seeds if seeds is not None else cfg.test_scenes.seeds
    n = n_episodes if n_episodes is not None else len(seeds)
    env = DrivingEnv(env_cfg)
    bank = SceneBank(seeds, cfg.scene)
    eps = []
    for i in range(n):
        env.reset(bank[i])
        st = EpisodeStats()
        while not env.done:
            dist = expert.dist_for(env)
            a = dist.mode() if deterministic else dist.sample(rng)
            res = env.step(a)
            st.env_return += res.reward
            st.cost += res.cost
            st.steps += 1
            st.speed_sum += res.info["speed"]
        st.success = res.termination_kind is Termination.DESTINATION
        eps.append(st)
    return MetricsRecord.from_episodes(0, "test", eps)
