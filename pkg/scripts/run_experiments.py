#!/usr/bin/env python3
"""Train the ablation grid on the default synthetic corpus and tabulate test mIoU.

    python scripts/run_experiments.py --out results/ [--only default,baseline]

Writes results/summary.json and prints a small table. Each run keeps its
full run directory under results/runs/<name>.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from partprior.pipeline import RunConfig, run_training
from partprior.priors import PriorConfig
from partprior.synth import generate_synthetic_corpus

_P = PriorConfig()

# name -> (missing_joint_rate of the corpus, config overrides)
EXPERIMENTS = {
    "default": (0.0, {}),
    "baseline": (0.0, {"baseline": True}),
    "pose_only": (0.0, {"use_mask": False}),
    "no_self_paced": (0.0, {"self_paced": False}),
    "params_large": (0.0, {"prior__c_a": _P.c_a * 1.5, "prior__c_b": _P.c_b * 1.5}),
    "params_small": (0.0, {"prior__c_a": _P.c_a * 0.5, "prior__c_b": _P.c_b * 0.5}),
    "recovery_on": (0.3, {}),
    "recovery_off": (0.3, {"prior__recovery": False}),
}


def corpus(root: Path, missing: float, seed: int) -> Path:
    path = root / f"corpus_seed{seed}_missing{missing}"
    if not (path / "meta.json").exists():
        generate_synthetic_corpus(path, 200, 50, 96, 96, seed=seed, missing_joint_rate=missing)
    return path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", help="comma-separated experiment names")
    ap.add_argument("--seed", type=int, default=17, help="corpus seed")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(asctime)s %(message)s")

    out = Path(args.out)
    names = args.only.split(",") if args.only else list(EXPERIMENTS)
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        ap.error(f"unknown experiments {unknown}; choose from {sorted(EXPERIMENTS)}")

    summary = {}
    for name in names:
        missing, overrides = EXPERIMENTS[name]
        cfg = RunConfig(data_dir=str(corpus(out, missing, args.seed)), run_dir=str(out / "runs" / name))
        cfg = cfg.updated(**overrides)
        start = time.perf_counter()
        states = run_training(cfg)
        summary[name] = {
            "overrides": overrides,
            "missing_joint_rate": missing,
            "miou": [s.metrics.miou for s in states],
            "supervision_miou": [s.supervision_miou for s in states],
            "seconds": round(time.perf_counter() - start, 1),
        }
        curve = " ".join(f"{100 * m:6.2f}" for m in summary[name]["miou"])
        print(f"{name:15s} {curve}   ({summary[name]['seconds']:.0f}s)", flush=True)

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
