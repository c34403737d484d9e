"""Demonstration datasets, behavior cloning and offline CQL."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..expert import ExpertPolicy
from ..learner.agent import Learner
from ..learner.buffer import ReplayBuffer, Transition
from ..nn import Adam, PolicyHead, leaf_grads, save_params
from ..sim.env import DrivingEnv, EnvConfig
from .config import RunConfig, env_digest, resolve_method, save_config
from .metrics import MetricsRecord, MetricsWriter

log = logging.getLogger(__name__)

_COLUMNS = ("obs", "agent_action", "applied_action", "reward", "intervention", "next_obs",
            "done", "takeover", "cost", "expert_mean", "expert_std")


@dataclass
class DemoDataset:
    header: dict
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.columns["reward"])

    def record(self, i: int) -> Transition:
        c = self.columns
        return Transition(
            obs=c["obs"][i], agent_action=c["agent_action"][i],
            applied_action=c["applied_action"][i], reward=float(c["reward"][i]),
            intervention=int(c["intervention"][i]), next_obs=c["next_obs"][i],
            done=bool(c["done"][i]), takeover=bool(c["takeover"][i]), cost=float(c["cost"][i]),
            expert_mean=c["expert_mean"][i], expert_std=c["expert_std"][i],
        )

    def save(self, path: str | Path) -> None:
        header = dict(self.header, count=len(self))
        np.savez_compressed(path, header=np.array(json.dumps(header, sort_keys=True)), **self.columns)

    @classmethod
    def load(cls, path: str | Path) -> "DemoDataset":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            cols = {k: z[k].copy() for k in _COLUMNS}
        ds = cls(header, cols)
        if header.get("count") != len(ds):
            raise ValueError(f"header count {header.get('count')} != {len(ds)} records")
        return ds

    def to_buffer(self) -> ReplayBuffer:
        c = self.columns
        buf = ReplayBuffer(max(len(self), 1), c["obs"].shape[1])
        n = len(self)
        for k in _COLUMNS:
            getattr(buf, k)[:n] = c[k]
        buf.size = n
        buf.ptr = n % buf.capacity
        return buf


def collect_dataset(expert: ExpertPolicy, scenes, n_steps: int, rng: np.random.Generator,
                    env_config: EnvConfig | None = None, header: dict | None = None) -> DemoDataset:
    """Roll out the expert and record every step as a takeover transition."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    env = DrivingEnv(env_config or expert.env_config)
    rows: dict[str, list] = {k: [] for k in _COLUMNS}
    ep = 0
    obs = None
    while len(rows["reward"]) < n_steps:
        if obs is None or env.done:
            obs = env.reset(scenes[ep % len(scenes)]).vector()
            ep += 1
        dist = expert.dist_for(env)
        a = dist.sample(rng)
        res = env.step(a)
        nxt = res.observation.vector()
        vals = dict(obs=obs, agent_action=a, applied_action=a, reward=res.reward, intervention=1,
                    next_obs=nxt, done=res.done and res.termination_kind.value != "horizon",
                    takeover=True, cost=float(res.cost), expert_mean=dist.mean, expert_std=dist.std)
        for k, v in vals.items():
            rows[k].append(v)
        obs = nxt
    cols = {k: np.asarray(v, dtype=bool if k == "takeover" else np.float64) for k, v in rows.items()}
    head = {"expert": asdict(expert.config), "episodes": ep}
    head.update(header or {})
    return DemoDataset(head, cols)


@dataclass
class BCResult:
    policy: PolicyHead
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def run_bc(dataset: DemoDataset, epochs: int, batch_size: int = 64, lr: float = 1e-4,
           hidden=(256, 256), activation: str = "tanh", seed: int = 0,
           validation_fraction: float = 0.1, policy: PolicyHead | None = None) -> BCResult:
    """Fit the policy head by maximum likelihood on the applied actions."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng([seed, 0xBC])
    obs = dataset.columns["obs"].astype(np.float32)
    act = dataset.columns["applied_action"].astype(np.float32)
    if policy is None:
        policy = PolicyHead(obs.shape[1], act.shape[1], hidden, activation, rng)
    n = len(obs)
    perm = rng.permutation(n)
    n_val = int(n * validation_fraction) if n > 1 else 0
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    opt = Adam(policy.params, lr)
    result = BCResult(policy)

    def nll(idx) -> float:
        if len(idx) == 0:
            return float("nan")
        return float(-policy.log_prob(obs[idx], act[idx]).data.mean())

    for _ in range(epochs):
        order = rng.permutation(tr_idx)
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            leaves = policy.params.leaves()
            loss = -policy.log_prob(obs[idx], act[idx], leaves).mean()
            loss.backward()
            opt.step(leaf_grads(leaves))
        result.train_loss.append(nll(tr_idx))
        result.val_loss.append(nll(val_idx))
    return result


def _dataset_for(cfg: RunConfig, env_cfg) -> DemoDataset:
    from .train import SceneBank

    if cfg.offline.dataset_path and Path(cfg.offline.dataset_path).exists():
        ds = DemoDataset.load(cfg.offline.dataset_path)
        if ds.header.get("env_digest") != env_digest(cfg):
            raise ValueError("dataset was generated under a different environment config")
        return ds
    expert = ExpertPolicy(cfg.expert, env_cfg)
    scenes = SceneBank(cfg.train_scenes.seeds, cfg.scene)
    rng = np.random.default_rng([cfg.seed, 0xDA7A])
    return collect_dataset(expert, scenes, cfg.offline.dataset_steps, rng, env_cfg,
                           {"env_digest": env_digest(cfg), "train_scenes": cfg.train_scenes.seeds})


def run_offline(cfg: RunConfig, out_dir=None) -> dict:
    """Train BC or offline CQL on an expert dataset and evaluate on the test scenes."""
    from .train import SceneBank, evaluate_policy

    lc, _ = resolve_method(cfg)
    env_cfg = replace(cfg.env, horizon=lc.horizon)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.yaml")
        writer = MetricsWriter(out / "metrics.jsonl")
    ds = _dataset_for(cfg, env_cfg)
    test = SceneBank(cfg.test_scenes.seeds, cfg.scene)

    def evaluate(policy, step, n):
        eps = evaluate_policy(lambda o: policy.act(o, deterministic=True).astype(np.float64),
                              test, n, env_cfg)
        rec = MetricsRecord.from_episodes(step, "test", eps)
        if writer:
            writer.write(rec)
        return rec

    if cfg.method == "bc":
        res = run_bc(ds, cfg.bc.epochs, cfg.bc.batch_size, cfg.bc.learning_rate, lc.hidden,
                     lc.activation, cfg.seed, cfg.bc.validation_fraction)
        policy = res.policy
        rec = evaluate(policy, cfg.bc.epochs, cfg.final_eval_episodes)
        groups = {"policy": policy.params}
        extra = {"train_loss": res.train_loss, "val_loss": res.val_loss}
    else:
        learner = Learner(env_cfg.obs_dim, 2, lc, seed=cfg.seed)
        buf = ds.to_buffer()
        rec = None
        for step in range(1, cfg.offline.gradient_steps + 1):
            learner.update(buf)
            if step % cfg.eval_every == 0 or step == cfg.offline.gradient_steps:
                final = step == cfg.offline.gradient_steps
                rec = evaluate(learner.policy, step,
                               cfg.final_eval_episodes if final else cfg.eval_episodes)
        policy = learner.policy
        groups = learner.nets.param_sets()
        extra = {}
    summary = {"method": cfg.method, "seed": cfg.seed, "dataset_size": len(ds),
               "final_test_success": rec.success_rate, "final_test_cost": rec.episodic_cost,
               "final_test_return": rec.episodic_return, "final_test_velocity": rec.mean_velocity,
               **extra}
    if out is not None:
        save_params(out / "checkpoint.bin", groups)
        meta = {"config_digest": cfg.digest(), "obs_dim": env_cfg.obs_dim,
                "hidden": list(lc.hidden), "activation": lc.activation}
        (out / "checkpoint.bin.json").write_text(json.dumps(meta, indent=2))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
