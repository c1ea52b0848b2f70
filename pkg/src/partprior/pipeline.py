"""Iterative weak-supervision training loop and run-directory bookkeeping.

Run directory layout::

    config.json
    decisions.jsonl                       one self-paced decision per line
    iter_<t>/model.ckpt                   JSON checkpoint
    iter_<t>/supervision/<id>.png         supervision used to train iteration t
    iter_<t>/metrics.json
    iter_<t>/lineage.json                 hash of the checkpoint the supervision came from
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .crf import CrfParams, argmax_labels, refine_regions
from .dataset import Dataset, Sample, load_dataset
from .errors import InvalidConfig
from .labelmap import UNCERTAIN, read_label_png, regions, write_label_png
from .losses import SelectionDecision, fuse_supervision, self_paced_select
from .metrics import Metrics, evaluate_miou
from .priors import PriorConfig, rasterize_priors
from .segmenter import SegmenterModel, TrainParams, TrainSample, extract_features, train_epoch

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    data_dir: str = ""
    run_dir: str = ""
    seed: int = 17
    prior: PriorConfig = field(default_factory=PriorConfig)
    crf: CrfParams = field(default_factory=CrfParams)
    train: TrainParams = field(default_factory=TrainParams)
    initial_epochs: int = 30
    refine_epochs: int = 10
    w_m: float = 1.0
    use_mask: bool = True
    num_refinement_iterations: int = 4
    self_paced: bool = True
    discard_fallback: str = "prior"  # "prior": fall back to prior-only supervision, "skip": drop the sample
    baseline: bool = False  # priors as full supervision, U -> background, no refinement
    roi_margin: int = 2

    def validate(self) -> None:
        if self.num_refinement_iterations < 0 or self.initial_epochs < 0 or self.refine_epochs < 0:
            raise InvalidConfig("iteration and epoch counts must be non-negative")
        if self.w_m < 0:
            raise InvalidConfig("w_m must be non-negative")
        if self.discard_fallback not in ("prior", "skip"):
            raise InvalidConfig(f"discard_fallback must be 'prior' or 'skip', got {self.discard_fallback!r}")
        if self.roi_margin < 0:
            raise InvalidConfig("roi_margin must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> RunConfig:
        return _build(cls, obj)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
        return cls.from_json(obj)

    def updated(self, **changes) -> RunConfig:
        """Copy with (possibly nested, ``section__key``-style) overrides applied."""
        obj = self.to_json()
        for key, val in changes.items():
            if "__" in key:
                sect, sub = key.split("__", 1)
                obj[sect][sub] = val
            else:
                obj[key] = val
        return RunConfig.from_json(obj)


_NESTED = {"prior": PriorConfig, "crf": CrfParams, "train": TrainParams}


def _build(cls, obj: dict):
    if not isinstance(obj, dict):
        raise InvalidConfig(f"{cls.__name__} expects an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise InvalidConfig(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, val in obj.items():
        if cls is RunConfig and key in _NESTED:
            val = _build(_NESTED[key], val)
        kwargs[key] = val
    try:
        inst = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc
    if isinstance(inst, RunConfig):
        inst.validate()
    return inst


@dataclass
class IterationState:
    iteration: int
    checkpoint: str
    supervision: dict[str, str]
    decisions: dict[str, SelectionDecision]
    metrics: Metrics
    train_loss: list[float]
    supervision_miou: float | None = None

    def summary(self) -> dict:
        kept = [d.kept for d in self.decisions.values()]
        return {
            "iteration": self.iteration,
            "checkpoint": self.checkpoint,
            "test": self.metrics.to_json(),
            "supervision_miou": self.supervision_miou,
            "final_train_loss": self.train_loss[-1] if self.train_loss else None,
            "kept": sum(kept),
            "discarded": len(kept) - sum(kept),
        }


def num_workers() -> int:
    env = os.environ.get("PARTPRIOR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidConfig(f"PARTPRIOR_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _map(fn, items):
    workers = min(num_workers(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def sample_priors(sample: Sample, config: PriorConfig) -> np.ndarray:
    h, w = sample.shape
    return rasterize_priors(sample.poses, w, h, config)


def baseline_supervision(prior: np.ndarray) -> np.ndarray:
    return np.where(prior == UNCERTAIN, 0, prior).astype(np.uint8)


def supervision_quality(supervision: list[np.ndarray], gts: list) -> float | None:
    """mIoU of supervision against ground truth on its confident pixels."""
    pairs = [(s, g) for s, g in zip(supervision, gts) if g is not None]
    if not pairs:
        return None
    preds, refs = [], []
    for s, g in pairs:
        conf = s != UNCERTAIN
        preds.append(s[conf])
        refs.append(g[conf])
    return evaluate_miou(np.concatenate(preds), np.concatenate(refs)).miou


def evaluate_model(model: SegmenterModel, samples: list[Sample], features: list[np.ndarray]) -> Metrics:
    preds, gts = [], []
    for s, f in zip(samples, features):
        if s.gt is None:
            continue
        preds.append(argmax_labels(model.predict_features(f)))
        gts.append(s.gt)
    if not preds:
        return Metrics(tuple(), float("nan"))
    return evaluate_miou(preds, gts)


def refine_sample(model: SegmenterModel, sample: Sample, feats: np.ndarray, prior: np.ndarray,
                  config: RunConfig, iteration: int, index: int) -> tuple[np.ndarray, SelectionDecision]:
    """Predict, CRF-refine the uncertain band, fuse with the prior and run self-paced selection."""
    probs = model.predict_features(feats)
    _, unc, _ = regions(prior)
    q = refine_regions(probs, sample.image, unc, config.crf, config.roi_margin)
    fused = fuse_supervision(prior, argmax_labels(q))
    if config.self_paced:
        decision = self_paced_select(probs, fused, [config.seed, iteration, index])
    else:
        decision = SelectionDecision(float("nan"), 0.0, True, 0.0)
    return fused, decision


def _write_iteration(run_dir: Path, t: int, model: SegmenterModel, samples: list[Sample],
                     supervision: list[np.ndarray]) -> tuple[str, dict[str, str]]:
    it_dir = run_dir / f"iter_{t}"
    ckpt = it_dir / "model.ckpt"
    model.save(ckpt)
    paths = {}
    for s, sup in zip(samples, supervision):
        p = it_dir / "supervision" / f"{s.sample_id}.png"
        write_label_png(p, sup)
        paths[s.sample_id] = str(p.relative_to(run_dir))
    return str(ckpt.relative_to(run_dir)), paths


def run_training(config: RunConfig, dataset: Dataset | None = None) -> list[IterationState]:
    """Initial training on priors followed by predict/refine/fuse/select/retrain rounds."""
    config.validate()
    if dataset is None:
        if not config.data_dir or not Path(config.data_dir).is_dir():
            raise InvalidConfig(f"data_dir {config.data_dir!r} does not exist")
        dataset = load_dataset(config.data_dir)
    if not dataset.train:
        raise InvalidConfig("dataset has no training samples")
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    # the directory is recorded as "." so a run copied or re-run elsewhere stays byte-identical
    _dump(run_dir / "config.json", {**config.to_json(), "run_dir": "."})
    decisions_path = run_dir / "decisions.jsonl"
    decisions_path.write_text("")

    train_feats = [extract_features(s.image) for s in dataset.train]
    test_feats = [extract_features(s.image) for s in dataset.test]
    priors = _map(lambda s: sample_priors(s, config.prior), dataset.train)
    use_mask = config.use_mask and not config.baseline
    w_m = config.w_m if use_mask else 0.0

    def make_samples(sups: list[np.ndarray | None]) -> list[TrainSample]:
        out = []
        for s, f, sup in zip(dataset.train, train_feats, sups):
            if sup is None:
                continue
            out.append(TrainSample(f, sup, s.full_mask if use_mask else None, s.sample_id))
        return out

    if config.baseline:
        supervision = [baseline_supervision(p) for p in priors]
    else:
        supervision = list(priors)
    n_iters = 0 if config.baseline else config.num_refinement_iterations

    model = SegmenterModel.zeros(TrainParams(**asdict(config.train)))
    rng = np.random.default_rng([config.seed, 0])
    log.info("iteration 0: training on priors (%d samples)", len(supervision))
    losses = [_train_epochs(model, make_samples(supervision), config.initial_epochs, w_m, rng)]
    states = []
    for t in range(n_iters + 1):
        if t > 0:
            prev_ckpt = run_dir / f"iter_{t - 1}" / "model.ckpt"
            source = SegmenterModel.load(prev_ckpt)
            results = _map(lambda k: refine_sample(source, dataset.train[k], train_feats[k], priors[k], config, t, k),
                           list(range(len(dataset.train))))
            supervision = []
            decisions = {}
            with open(decisions_path, "a") as fh:
                for s, prior, (fused, dec) in zip(dataset.train, priors, results):
                    decisions[s.sample_id] = dec
                    fh.write(json.dumps({"iteration": t, "sample": s.sample_id, **dec.to_json()}, sort_keys=True) + "\n")
                    if dec.kept:
                        supervision.append(fused)
                    else:
                        supervision.append(prior if config.discard_fallback == "prior" else None)
            log.info("iteration %d: %d/%d refined labels kept", t, sum(d.kept for d in decisions.values()),
                     len(decisions))
            losses = [_train_epochs(model, make_samples(supervision), config.refine_epochs, w_m, rng)]
            _dump(run_dir / f"iter_{t}" / "lineage.json", {
                "iteration": t,
                "supervision_from": str(prev_ckpt.relative_to(run_dir)),
                "supervision_from_sha256": file_sha256(prev_ckpt),
                "warm_start_from_sha256": file_sha256(prev_ckpt),
            })
        else:
            decisions = {}
        kept_samples = [s for s, sup in zip(dataset.train, supervision) if sup is not None]
        kept_sups = [sup for sup in supervision if sup is not None]
        ckpt, sup_paths = _write_iteration(run_dir, t, model, kept_samples, kept_sups)
        metrics = evaluate_model(model, dataset.test, test_feats)
        quality = supervision_quality(kept_sups, [s.gt for s in kept_samples])
        state = IterationState(t, ckpt, sup_paths, decisions, metrics, losses[0], quality)
        _dump(run_dir / f"iter_{t}" / "metrics.json", state.summary())
        log.info("iteration %d: test mIoU %.4f", t, metrics.miou)
        states.append(state)
    return states


def _train_epochs(model: SegmenterModel, samples: list[TrainSample], epochs: int, w_m: float,
                  rng: np.random.Generator) -> list[float]:
    return [train_epoch(model, samples, w_m, rng) for _ in range(epochs)]


def verify_run(run_dir: str | Path) -> list[str]:
    """Check lineage hashes and prior agreement across a finished run; returns problems found."""
    run_dir = Path(run_dir)
    problems = []
    config = RunConfig.load(run_dir / "config.json")
    iters = sorted(int(p.name.split("_")[1]) for p in run_dir.glob("iter_*"))
    if iters != list(range(len(iters))):
        problems.append(f"iteration directories are not contiguous: {iters}")
    prior_dir = run_dir / "iter_0" / "supervision"
    for t in iters[1:]:
        lin_path = run_dir / f"iter_{t}" / "lineage.json"
        if not lin_path.exists():
            problems.append(f"iter_{t}: missing lineage.json")
            continue
        with open(lin_path) as fh:
            lin = json.load(fh)
        src = run_dir / lin["supervision_from"]
        if lin["supervision_from"] != f"iter_{t - 1}/model.ckpt":
            problems.append(f"iter_{t}: supervision drawn from {lin['supervision_from']}")
        elif file_sha256(src) != lin["supervision_from_sha256"]:
            problems.append(f"iter_{t}: checkpoint hash mismatch for {lin['supervision_from']}")
        if not config.baseline:
            for p in sorted((run_dir / f"iter_{t}" / "supervision").glob("*.png")):
                prior_p = prior_dir / p.name
                if not prior_p.exists():
                    continue
                prior = read_label_png(prior_p)
                sup = read_label_png(p)
                conf = prior != UNCERTAIN
                if not np.array_equal(sup[conf], prior[conf]):
                    problems.append(f"iter_{t}/{p.name}: disagrees with the prior on F/B pixels")
    return problems
