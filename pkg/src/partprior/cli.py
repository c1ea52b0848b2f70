"""Command line for the part-prior pipeline.

Every subcommand prints one JSON document on stdout; logs go to stderr.
Exit codes: 0 ok, 2 bad configuration or flags, 3 I/O failure, 4 invalid
input data or a failed run verification.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .crf import CrfParams, argmax_labels, meanfield_refine, refine_regions
from .errors import DimensionMismatch, InvalidConfig, ParseError, SchemaError
from .labelmap import NUM_LABELS, UNCERTAIN, read_label_png, read_rgb_png, regions, write_label_png
from .losses import fuse_supervision
from .metrics import evaluate_miou
from .pipeline import RunConfig, run_training, verify_run
from .pose import load_poses
from .priors import rasterize_priors
from .segmenter import SegmenterModel
from .synth import generate_synthetic_corpus

log = logging.getLogger("partprior")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVALID = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would print usage and exit; keep the one-JSON-document contract instead
    def error(self, message):
        raise UsageError(message)


def _path(args, p: str | None) -> Path | None:
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else Path(args.workdir) / p


def _require(args, name: str) -> Path:
    val = getattr(args, name)
    if val is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return _path(args, val)


def _base_config(args) -> RunConfig:
    cfg = RunConfig.load(_path(args, args.config)) if args.config else RunConfig()
    changes = {}
    for flag, key in (("ca", "prior__c_a"), ("cb", "prior__c_b"), ("kd", "prior__k_d"),
                      ("leg_shift", "prior__leg_shift"), ("crf_iters", "crf__iterations")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[key] = val
    if getattr(args, "no_recovery", False):
        changes["prior__recovery"] = False
    return cfg.updated(**changes) if changes else cfg


def _image_ids(directory: Path, suffix: str) -> list[str]:
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    return sorted(p.stem for p in directory.glob(f"*{suffix}"))


def cmd_synth(args) -> dict:
    out = _require(args, "out")
    return generate_synthetic_corpus(out, args.n_train, args.n_test, args.width, args.height, args.seed,
                                     args.occlusion_rate, args.missing_joint_rate)


def cmd_gen_priors(args) -> dict:
    poses_path = _require(args, "poses")
    out = _require(args, "out")
    cfg = _base_config(args).prior
    poses = load_poses(poses_path, recover=False)
    images = _path(args, args.images)
    written = {}
    for sid in sorted(poses):
        if images is not None:
            h, w = read_rgb_png(images / f"{sid}.png").shape[:2]
        elif args.width and args.height:
            h, w = args.height, args.width
        else:
            raise UsageError("give --images or both --width and --height")
        prior = rasterize_priors(poses[sid], w, h, cfg)
        write_label_png(out / f"{sid}.png", prior)
        fg, unc, bkg = regions(prior)
        written[sid] = {"F": int(fg.sum()), "U": int(unc.sum()), "B": int(bkg.sum())}
    return {"out": str(out), "prior": asdict(cfg), "images": written}


def cmd_train(args) -> dict:
    cfg = _base_config(args)
    changes = {"data_dir": str(_require(args, "data")), "run_dir": str(_require(args, "out"))}
    for flag, key in (("seed", "seed"), ("iterations", "num_refinement_iterations"),
                      ("initial_epochs", "initial_epochs"), ("refine_epochs", "refine_epochs"), ("w_m", "w_m")):
        val = getattr(args, flag)
        if val is not None:
            changes[key] = val
    if args.no_mask:
        changes["use_mask"] = False
    if args.baseline:
        changes["baseline"] = True
    if args.no_self_paced:
        changes["self_paced"] = False
    cfg = cfg.updated(**changes)
    states = run_training(cfg)
    return {"run_dir": cfg.run_dir, "iterations": [s.summary() for s in states]}


def cmd_predict(args) -> dict:
    model = SegmenterModel.load(_require(args, "checkpoint"))
    images = _require(args, "images")
    out = _require(args, "out")
    out.mkdir(parents=True, exist_ok=True)
    ids = _image_ids(images, ".png")
    for sid in ids:
        probs = model.predict(read_rgb_png(images / f"{sid}.png"))
        np.save(out / f"{sid}.npy", probs)
        write_label_png(out / f"{sid}.png", argmax_labels(probs))
    return {"out": str(out), "count": len(ids)}


def cmd_refine(args) -> dict:
    probs_dir = _require(args, "probs")
    images = _require(args, "images")
    out = _require(args, "out")
    priors_dir = _path(args, args.priors)
    cfg = _base_config(args)
    crf = cfg.crf
    margin = cfg.roi_margin if args.margin is None else args.margin
    ids = _image_ids(probs_dir, ".npy")
    for sid in ids:
        probs = np.load(probs_dir / f"{sid}.npy")
        if probs.ndim != 3 or probs.shape[-1] != NUM_LABELS:
            raise DimensionMismatch(f"{sid}.npy: expected (H, W, {NUM_LABELS}) probabilities, got {probs.shape}")
        image = read_rgb_png(images / f"{sid}.png")
        if priors_dir is None:
            q = meanfield_refine(probs, image, crf)
            labels = argmax_labels(q)
        else:
            prior = read_label_png(priors_dir / f"{sid}.png")
            q = refine_regions(probs, image, prior == UNCERTAIN, crf, margin)
            labels = fuse_supervision(prior, argmax_labels(q))
        write_label_png(out / f"{sid}.png", labels)
    return {"out": str(out), "count": len(ids), "crf": crf.to_json(), "fused": priors_dir is not None}


def cmd_eval(args) -> dict:
    pred_dir = _require(args, "pred")
    gt_dir = _require(args, "gt")
    ids = _image_ids(gt_dir, ".png")
    if not ids:
        raise FileNotFoundError(f"{gt_dir}: no label PNGs")
    preds = [read_label_png(pred_dir / f"{sid}.png") for sid in ids]
    gts = [read_label_png(gt_dir / f"{sid}.png") for sid in ids]
    for sid, p, g in zip(ids, preds, gts):
        if (p == UNCERTAIN).any() or (g == UNCERTAIN).any():
            raise SchemaError(f"{sid}: uncertain pixels cannot be evaluated")
    return {"count": len(ids), **evaluate_miou(preds, gts).to_json()}


def cmd_verify(args) -> dict:
    run_dir = _require(args, "run")
    problems = verify_run(run_dir)
    return {"run_dir": str(run_dir), "ok": not problems, "problems": problems}


def _prior_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ca", type=float, help="ellipse major-axis factor")
    p.add_argument("--cb", type=float, help="ellipse minor-axis factor")
    p.add_argument("--kd", type=float, help="dilation factor for the uncertain band (<= 0 disables it)")
    p.add_argument("--leg-shift", choices=("half", "full"))
    p.add_argument("--no-recovery", action="store_true", help="do not infer missing neck/torso corners")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="partprior", description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default=".", help="base for relative paths")
    parser.add_argument("--config", help="run config JSON; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--out")
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--occlusion-rate", type=float, default=0.3)
    p.add_argument("--missing-joint-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gen-priors", help="rasterize tri-state part priors from poses")
    p.add_argument("--poses")
    p.add_argument("--images", help="image directory, used for output sizes")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out")
    _prior_flags(p)
    p.set_defaults(func=cmd_gen_priors)

    p = sub.add_parser("train", help="initial training plus iterative refinement")
    p.add_argument("--data")
    p.add_argument("--out", help="run directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int, help="refinement iterations after the initial model")
    p.add_argument("--initial-epochs", type=int)
    p.add_argument("--refine-epochs", type=int)
    p.add_argument("--w-m", type=float, help="mask loss weight")
    p.add_argument("--no-mask", action="store_true", help="pose-only training")
    p.add_argument("--baseline", action="store_true", help="priors as full labels, no refinement")
    p.add_argument("--no-self-paced", action="store_true")
    p.add_argument("--crf-iters", type=int)
    _prior_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="probability maps (.npy) and label PNGs from a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--images")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("refine", help="CRF-refine probability maps, optionally fused with priors")
    p.add_argument("--probs", help="directory of (H, W, L) .npy probability maps")
    p.add_argument("--images")
    p.add_argument("--priors", help="tri-state priors; refine only their uncertain band and fuse")
    p.add_argument("--out")
    p.add_argument("--crf-iters", type=int)
    p.add_argument("--margin", type=int, help="growth of the uncertain band before refinement")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="mIoU of predicted label PNGs against ground truth")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="check lineage and prior agreement of a run directory")
    p.add_argument("--run")
    p.set_defaults(func=cmd_verify)
    return parser


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, sort_keys=True, default=str)
    sys.stdout.write("\n")
    sys.stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        _emit({"ok": False, "error": str(exc), "kind": "usage"})
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except (UsageError, InvalidConfig) as exc:
        return _fail(exc, EXIT_CONFIG, "config")
    except (ParseError, SchemaError, DimensionMismatch, ValueError) as exc:
        return _fail(exc, EXIT_INVALID, "invalid")
    except OSError as exc:
        return _fail(exc, EXIT_IO, "io")
    _emit(result)
    if args.command == "verify" and not result["ok"]:
        return EXIT_INVALID
    return EXIT_OK


def _fail(exc: Exception, code: int, kind: str) -> int:
    log.error("%s", exc)
    _emit({"ok": False, "error": str(exc), "kind": kind})
    return code


if __name__ == "__main__":
    sys.exit(main())
