"""Online training loop shared by EGPO and the SAC-family baselines."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..expert import ExpertPolicy
from ..guardian import GuardianConfig, GuardianMode, rule_switch, switch_from_distribution
from ..learner.agent import Learner, LearnerConfig, NonFiniteTrainingError
from ..learner.buffer import ReplayBuffer, Transition
from ..nn import save_params
from ..sim.env import DrivingEnv, Termination
from ..sim.scene import SceneSpec, generate_scene
from .config import RunConfig, resolve_method, save_config
from .metrics import EpisodeStats, MetricsRecord, MetricsWriter

log = logging.getLogger(__name__)


class SceneBank:
    """Lazily generated, cached scenes for a seed list."""

    def __init__(self, seeds: list[int], cfg):
        self.seeds = list(seeds)
        self.cfg = cfg
        self._cache: dict[int, SceneSpec] = {}

    def __len__(self):
        return len(self.seeds)

    def __getitem__(self, i: int) -> SceneSpec:
        seed = self.seeds[i % len(self.seeds)]
        if seed not in self._cache:
            self._cache[seed] = generate_scene(seed, self.cfg)
        return self._cache[seed]


def evaluate_policy(act_fn, scenes: SceneBank, n_episodes: int, env_config, offset: int = 0) -> list[EpisodeStats]:
    """Roll out ``act_fn(obs_vector) -> action`` without any guardian."""
    env = DrivingEnv(env_config)
    out = []
    for ep in range(n_episodes):
        obs = env.reset(scenes[offset + ep]).vector()
        st = EpisodeStats()
        while not env.done:
            res = env.step(act_fn(obs))
            obs = res.observation.vector()
            st.env_return += res.reward
            st.ret += res.reward
            st.cost += res.cost
            st.steps += 1
            st.speed_sum += res.info["speed"]
        st.success = res.termination_kind is Termination.DESTINATION
        out.append(st)
    return out


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir: str | Path | None = None):
        self.cfg = cfg
        self.learner_cfg, self.guardian_cfg = resolve_method(cfg)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        env_cfg = replace(cfg.env, horizon=self.learner_cfg.horizon)
        self.env_cfg = env_cfg
        self.env = DrivingEnv(env_cfg)
        self.obs_dim = env_cfg.obs_dim
        self.expert = ExpertPolicy(cfg.expert, env_cfg)
        self.train_scenes = SceneBank(cfg.train_scenes.seeds, cfg.scene)
        self.test_scenes = SceneBank(cfg.test_scenes.seeds, cfg.scene)
        self.learner = Learner(self.obs_dim, 2, self.learner_cfg, seed=cfg.seed)
        self.buffer = ReplayBuffer(min(self.learner_cfg.buffer_capacity, max(cfg.total_env_steps, 1)),
                                   self.obs_dim)
        ss = np.random.SeedSequence([cfg.seed, 0xD81E])
        self.rng_scene, self.rng_act, self.rng_guardian = (np.random.default_rng(s) for s in ss.spawn(3))
        self.step = 0
        self.episodes: list[EpisodeStats] = []
        self.episode_log: list[dict] = []
        self.iteration_log: list[dict] = []
        self.test_log: list[MetricsRecord] = []
        self._obs = None
        self._ep = None
        self._zero_reward = "zero_env_reward" in cfg.ablations

    # -- acting ------------------------------------------------------------

    @property
    def guardian_on(self) -> bool:
        return self.guardian_cfg.mode is not GuardianMode.OFF

    def _new_episode(self):
        scene = self.train_scenes[int(self.rng_scene.integers(len(self.train_scenes)))]
        self._obs = self.env.reset(scene).vector()
        self._ep = EpisodeStats()

    def _agent_action(self, obs: np.ndarray) -> np.ndarray:
        if self.step < self.learner_cfg.warmup_steps:
            return self.rng_act.uniform(-1.0, 1.0, size=2)
        return self.learner.policy.act(obs, self.rng_act).astype(np.float64)

    def env_step(self) -> tuple[Transition, EpisodeStats | None]:
        if self._ep is None or self.env.done:
            self._new_episode()
        obs = self._obs
        a = self._agent_action(obs)
        dist = None
        if self.guardian_on:
            dist = self.expert.dist_for(self.env)
            if self.guardian_cfg.mode is GuardianMode.RULE_BASED:
                out = rule_switch(self.env.state, self.env.scene, a, self.expert,
                                  self.guardian_cfg.rule_thresholds, self.rng_guardian, self.env.time)
            else:
                out = switch_from_distribution(dist, a, self.guardian_cfg.eta, self.rng_guardian)
            applied, c_hat = out.applied_action, out.intervention
        else:
            applied, c_hat = a, 0
        res = self.env.step(applied)
        next_obs = res.observation.vector()
        reward = 0.0 if self._zero_reward else res.reward
        if self.cfg.method == "sac_rs":
            reward -= self.cfg.cost_weight * res.cost
        terminal = res.done and res.termination_kind is not Termination.HORIZON
        tr = Transition(
            obs=obs, agent_action=a, applied_action=applied, reward=reward, intervention=c_hat,
            next_obs=next_obs, done=terminal, takeover=bool(c_hat), cost=float(res.cost),
            expert_mean=None if dist is None else dist.mean,
            expert_std=None if dist is None else dist.std,
        )
        ep = self._ep
        ep.ret += reward
        ep.env_return += res.reward
        ep.cost += res.cost
        ep.interventions += c_hat
        ep.steps += 1
        ep.speed_sum += res.info["speed"]
        self._obs = next_obs
        self.step += 1
        if res.done:
            ep.success = res.termination_kind is Termination.DESTINATION
            self.episodes.append(ep)
            self.episode_log.append({
                "step": self.step, "return": ep.env_return, "cost": ep.cost,
                "interventions": ep.interventions, "success": ep.success,
                "length": ep.steps, "velocity": ep.mean_speed,
                "termination": res.termination_kind.value,
            })
            return tr, ep
        return tr, None

    # -- evaluation --------------------------------------------------------

    def evaluate(self, n_episodes: int) -> list[EpisodeStats]:
        pol = self.learner.policy
        return evaluate_policy(lambda o: pol.act(o, deterministic=True).astype(np.float64),
                               self.test_scenes, n_episodes, self.env_cfg)

    # -- main loop ---------------------------------------------------------

    def run(self) -> dict:
        cfg, lc = self.cfg, self.learner_cfg
        writer = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            save_config(cfg, self.out_dir / "config.yaml")
            writer = MetricsWriter(self.out_dir / "metrics.jsonl")
        t0 = time.time()
        next_eval = cfg.eval_every
        try:
            while self.step < cfg.total_env_steps:
                n = min(lc.iteration_steps, cfg.total_env_steps - self.step)
                batch, finished = [], []
                for _ in range(n):
                    tr, ep = self.env_step()
                    batch.append(tr)
                    if ep is not None:
                        finished.append(ep)
                self.buffer.extend(batch)
                train_metrics: dict = {}
                learning = self.step >= lc.warmup_steps
                if learning:
                    n_updates = int(round(n * lc.updates_per_step))
                    acc: dict[str, list] = {}
                    for _ in range(n_updates):
                        for k, v in self.learner.update(self.buffer).items():
                            acc.setdefault(k, []).append(v)
                    train_metrics = {k: float(np.mean(v)) for k, v in acc.items()}
                    signal = None
                    if finished:
                        key = "interventions" if lc.constraint == "intervention" else "cost"
                        signal = float(np.mean([getattr(e, key) for e in finished]))
                    self.learner.update_lambda(signal)
                lag = self.learner.lagrangian
                train_metrics.update(buffer_size=len(self.buffer),
                                     takeover_size=self.buffer.n_takeover,
                                     wall_time=time.time() - t0)
                rec = MetricsRecord.from_episodes(self.step, "train", finished, lam=lag.lam,
                                                  delta=lag.prev_delta, extra=train_metrics)
                self.iteration_log.append({"step": self.step, **train_metrics,
                                           "lambda": lag.lam, "delta": lag.prev_delta})
                if writer:
                    writer.write(rec)
                if self.step >= next_eval or self.step >= cfg.total_env_steps:
                    final = self.step >= cfg.total_env_steps
                    eps = self.evaluate(cfg.final_eval_episodes if final else cfg.eval_episodes)
                    trec = MetricsRecord.from_episodes(self.step, "test", eps, lam=lag.lam,
                                                       delta=lag.prev_delta)
                    self.test_log.append(trec)
                    if writer:
                        writer.write(trec)
                    log.info("step %d test success %.2f cost %.2f | train eps %d lambda %.2f",
                             self.step, trec.success_rate, trec.episodic_cost,
                             len(self.episodes), lag.lam)
                    while next_eval <= self.step:
                        next_eval += cfg.eval_every
        except NonFiniteTrainingError:
            if self.out_dir is not None:
                save_params(self.out_dir / "diagnostic.bin", self.learner.nets.param_sets())
            raise
        summary = self.summary()
        if self.out_dir is not None:
            self.save_checkpoint(self.out_dir / "checkpoint.bin")
            with open(self.out_dir / "episodes.jsonl", "w") as fh:
                for row in self.episode_log:
                    fh.write(json.dumps(row) + "\n")
            with open(self.out_dir / "summary.json", "w") as fh:
                json.dump(summary, fh, indent=2, sort_keys=True)
        return summary

    def save_checkpoint(self, path: Path) -> None:
        save_params(path, self.learner.nets.param_sets())
        meta = {"config_digest": self.cfg.digest(), "obs_dim": self.obs_dim,
                "hidden": list(self.learner_cfg.hidden), "activation": self.learner_cfg.activation,
                "step": self.step, "lambda": self.learner.lam}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))

    def summary(self) -> dict:
        eps = self.episode_log
        final = self.test_log[-1] if self.test_log else None
        return {
            "method": self.cfg.method,
            "seed": self.cfg.seed,
            "ablations": list(self.cfg.ablations),
            "steps": self.step,
            "train_episodes": len(eps),
            "train_mean_cost": float(np.mean([e["cost"] for e in eps])) if eps else None,
            "train_mean_interventions": float(np.mean([e["interventions"] for e in eps])) if eps else None,
            "train_success_rate": float(np.mean([e["success"] for e in eps])) if eps else None,
            "final_test_success": final.success_rate if final else None,
            "final_test_cost": final.episodic_cost if final else None,
            "final_test_return": final.episodic_return if final else None,
            "final_test_velocity": final.mean_velocity if final else None,
            "final_lambda": self.learner.lam,
            "skipped_actor_steps": self.learner.skipped_actor_steps,
        }


def train(cfg: RunConfig, out_dir: str | Path | None = None) -> dict:
    if cfg.method in ("bc", "cql_offline"):
        from .offline import run_offline

        return run_offline(cfg, out_dir)
    return Trainer(cfg, out_dir).run()
