"""Command-line entry point: ``egpo <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import theory
from ..expert import ExpertPolicy
from ..nn import save_params
from ..sim.scene import generate_scene
from .config import env_digest, load_config, resolve_method
from .evaluate import evaluate
from .offline import DemoDataset, collect_dataset, run_bc
from .report import aggregate, find_runs, format_table, run_row
from .train import SceneBank, train


def _seed_range(text: str) -> list[int]:
    start, _, count = text.partition(":")
    return list(range(int(start), int(start) + int(count or 1)))


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--method")
    p.add_argument("--ablation", action="append", default=[], help="repeatable")
    p.add_argument("--eta", type=float)
    p.add_argument("--quality", type=float, help="expert quality in (0, 1]")
    p.add_argument("--steps", type=int, help="total environment steps")


def _load(args):
    return load_config(args.config, seed=args.seed, method=args.method, ablations=args.ablation,
                       eta=args.eta, quality=args.quality, total_env_steps=args.steps)


def cmd_train(args) -> int:
    cfg = _load(args)
    out = args.out or Path("runs") / f"{cfg.method}_s{cfg.seed}_{cfg.digest()[:8]}"
    summary = train(cfg, out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    seeds = _seed_range(args.scenes) if args.scenes else None
    rec = evaluate(args.checkpoint, cfg, seeds, args.episodes)
    print(rec.to_json())
    return 0


def cmd_collect(args) -> int:
    cfg = _load(args)
    lc, _ = resolve_method(cfg)
    env_cfg = replace(cfg.env, horizon=lc.horizon)
    rng = np.random.default_rng([cfg.seed, 0xDA7A])
    ds = collect_dataset(ExpertPolicy(cfg.expert, env_cfg), SceneBank(cfg.train_scenes.seeds, cfg.scene),
                         args.n_steps, rng, env_cfg,
                         {"env_digest": env_digest(cfg), "train_scenes": cfg.train_scenes.seeds})
    ds.save(args.out)
    print(f"wrote {len(ds)} transitions to {args.out}")
    return 0


def cmd_bc(args) -> int:
    cfg = _load(args)
    lc, _ = resolve_method(cfg)
    ds = DemoDataset.load(args.dataset)
    res = run_bc(ds, args.epochs if args.epochs is not None else cfg.bc.epochs, cfg.bc.batch_size,
                 cfg.bc.learning_rate, lc.hidden, lc.activation, cfg.seed, cfg.bc.validation_fraction)
    args.out.mkdir(parents=True, exist_ok=True)
    save_params(args.out / "checkpoint.bin", {"policy": res.policy.params})
    meta = {"config_digest": cfg.digest(), "obs_dim": cfg.env.obs_dim, "hidden": list(lc.hidden),
            "activation": lc.activation}
    (args.out / "checkpoint.bin.json").write_text(json.dumps(meta, indent=2))
    print(json.dumps({"train_loss": res.train_loss, "val_loss": res.val_loss}))
    return 0


def cmd_verify_theory(args) -> int:
    report = theory.run_theory_suite(args.instances, args.seed)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    for name, r in report.items():
        print(f"{name}: instances={r['n_instances']} violations={r['n_violations']} "
              f"min_slack={r['min_slack']:.3g} max_identity_error={r['max_identity_error']:.3g}")
    return 0 if all(r["ok"] for r in report.values()) else 1


def cmd_report(args) -> int:
    rows = [run_row(d) for d in find_runs(args.root)]
    agg = aggregate(rows)
    print(format_table(agg))
    if args.json:
        Path(args.json).write_text(json.dumps(agg, indent=2))
    return 0


def cmd_scene_dump(args) -> int:
    cfg = _load(args)
    spec = generate_scene(args.scene_seed, cfg.scene)
    text = json.dumps(spec.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egpo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one method")
    _run_args(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint with the guardian off")
    _run_args(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scenes", help="START:COUNT seed range (default: test scenes)")
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("collect", help="write an expert demonstration dataset")
    _run_args(p)
    p.add_argument("--n-steps", type=int, default=50_000)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("bc", help="behavior cloning on a dataset")
    _run_args(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_bc)

    p = sub.add_parser("verify-theory", help="randomized tabular checks of the risk bound")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("report", help="aggregate run directories")
    p.add_argument("root", type=Path)
    p.add_argument("--json", type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("scene", help="scene utilities")
    scene_sub = p.add_subparsers(dest="scene_command", required=True)
    d = scene_sub.add_parser("dump", help="print a generated scene as JSON")
    _run_args(d)
    d.add_argument("--scene-seed", type=int, default=0)
    d.add_argument("--out", type=Path)
    d.set_defaults(func=cmd_scene_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
