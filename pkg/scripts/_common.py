"""Helpers shared by the experiment scripts."""
from __future__ import annotations

import argparse
from pathlib import Path

from ontozero import pipeline
from ontozero.config import load_config, parse_overrides
from ontozero.zoo import SyntheticSpec, write_fixture


def base_parser(description: str, task: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default=f"experiments/{task}", help="working directory")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated run seeds")
    p.add_argument("--config", help="JSON run config (defaults to the desk profile)")
    p.add_argument("--spec", default="{}", help="JSON overrides for the synthetic fixture spec")
    return p


def fixture(root: Path, spec: dict, seed: int) -> Path:
    d = root / f"fixture-seed{seed}"
    if not d.exists():
        write_fixture(SyntheticSpec.from_dict({**spec, "seed": seed}), d)
    return d


def run_seed(args, extra, task: str, seed: int, spec: dict, **keys):
    root = Path(args.out)
    data = fixture(root, {"task": task, **spec}, seed)
    overrides = [("task", task), ("paths.data", str(data)), ("paths.out", str(root / f"run-seed{seed}")),
                 ("seed", seed), *keys.items(), *parse_overrides(extra)]
    cfg = load_config(args.config, overrides)
    return cfg, pipeline.run_all(cfg)


def seeds(args) -> list[int]:
    return [int(s) for s in args.seeds.split(",") if s]
