"""Aggregate run directories into per-method rows (mean and std across seeds)."""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import numpy as np
import yaml

from .metrics import read_metrics

FIELDS = ("train_cost", "train_interventions", "test_success", "test_cost", "test_return", "test_velocity")


def read_episodes(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "episodes.jsonl"
    if not path.exists():
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def window_mean(values, lo: float, hi: float) -> float:
    """Mean of the fraction ``[lo, hi)`` of a sequence, at least one element wide."""
    n = len(values)
    if n == 0:
        return float("nan")
    a = min(int(np.floor(lo * n)), n - 1)
    b = max(int(np.ceil(hi * n)), a + 1)
    return float(np.mean(values[a:b]))


def run_row(run_dir: str | Path, final_window: float = 0.1) -> dict:
    """Scalar results of one run directory."""
    run_dir = Path(run_dir)
    with open(run_dir / "config.yaml") as fh:
        cfg = yaml.safe_load(fh)
    eps = read_episodes(run_dir)
    tests = [r for r in read_metrics(run_dir / "metrics.jsonl") if r["split"] == "test"]
    final = tests[-1] if tests else {}
    costs = [e["cost"] for e in eps]
    ivs = [e["interventions"] for e in eps]
    return {
        "run": str(run_dir),
        "method": cfg["method"],
        "ablations": list(cfg.get("ablations") or []),
        "quality": cfg["expert"]["quality"],
        "eta": cfg["guardian"]["eta"],
        "seed": cfg["seed"],
        "train_cost": float(np.mean(costs)) if costs else float("nan"),
        "train_interventions": window_mean(ivs, 1.0 - final_window, 1.0),
        "first_interventions": window_mean(ivs, 0.0, final_window),
        "test_success": final.get("success_rate", float("nan")),
        "test_cost": final.get("episodic_cost", float("nan")),
        "test_return": final.get("episodic_return", float("nan")),
        "test_velocity": final.get("mean_velocity", float("nan")),
    }


def group_key(row: dict) -> str:
    key = row["method"]
    if row["ablations"]:
        key += "+" + "+".join(sorted(row["ablations"]))
    if row["method"] == "egpo":
        key += f" q={row['quality']:g} eta={row['eta']:g}"
    return key


def aggregate(rows: list[dict]) -> dict[str, dict]:
    groups: dict[str, list[dict]] = defaultdict(list)
    for r in rows:
        groups[group_key(r)].append(r)
    out = {}
    for key, rs in sorted(groups.items()):
        entry = {"seeds": sorted(r["seed"] for r in rs)}
        for f in FIELDS + ("first_interventions",):
            vals = np.array([r[f] for r in rs], dtype=float)
            entry[f] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        out[key] = entry
    return out


def find_runs(root: str | Path) -> list[Path]:
    return sorted(p.parent for p in Path(root).rglob("summary.json") if (p.parent / "config.yaml").exists())


def format_table(agg: dict[str, dict]) -> str:
    head = f"{'group':<40} {'n':>2} " + " ".join(f"{f:>22}" for f in FIELDS)
    lines = [head, "-" * len(head)]
    for key, e in agg.items():
        cells = " ".join(f"{e[f]['mean']:>12.3f} ± {e[f]['std']:<7.3f}" for f in FIELDS)
        lines.append(f"{key:<40} {len(e['seeds']):>2} {cells}")
    return "\n".join(lines)
