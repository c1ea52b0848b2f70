"""Linear-softmax per-pixel segmenter over hand-made colour/position features."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptySupervision
from .labelmap import NUM_LABELS, UNCERTAIN
from .losses import EPS, prob_grad_to_logit_grad, total_loss

log = logging.getLogger(__name__)

BLUR_RADII = (2, 5)
NUM_FEATURES = 2 + 3 + 3 * len(BLUR_RADII)
CHECKPOINT_VERSION = 1


def extract_features(image: np.ndarray) -> np.ndarray:
    """``(H, W, 11)`` features: (x/W, y/H), RGB/255, box-blurred RGB/255 at radius 2 and 5."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    rgb = image.astype(float) / 255.0
    ys, xs = np.mgrid[0:h, 0:w]
    parts = [(xs / w)[..., None], (ys / h)[..., None], rgb]
    for r in BLUR_RADII:
        parts.append(ndimage.uniform_filter(rgb, size=(2 * r + 1, 2 * r + 1, 1), mode="reflect"))
    return np.clip(np.concatenate(parts, axis=-1), 0.0, 1.0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class TrainParams:
    learning_rate: float = 0.5
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0


@dataclass
class SegmenterModel:
    weights: np.ndarray
    bias: np.ndarray
    params: TrainParams = field(default_factory=TrainParams)
    velocity_w: np.ndarray | None = field(default=None, repr=False)
    velocity_b: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def zeros(cls, params: TrainParams | None = None, num_features: int = NUM_FEATURES,
              num_labels: int = NUM_LABELS) -> SegmenterModel:
        return cls(np.zeros((num_features, num_labels)), np.zeros(num_labels), params or TrainParams())

    def copy(self) -> SegmenterModel:
        return SegmenterModel(self.weights.copy(), self.bias.copy(), TrainParams(**asdict(self.params)),
                              None if self.velocity_w is None else self.velocity_w.copy(),
                              None if self.velocity_b is None else self.velocity_b.copy())

    def logits(self, features: np.ndarray) -> np.ndarray:
        if features.shape[-1] != self.weights.shape[0]:
            raise DimensionMismatch(f"model expects {self.weights.shape[0]} features, got {features.shape[-1]}")
        return features @ self.weights + self.bias

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features))

    def predict(self, image: np.ndarray) -> np.ndarray:
        return self.predict_features(extract_features(image))

    # -- checkpoints: JSON floats use repr, so the round trip is exact
    def to_json(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "num_features": int(self.weights.shape[0]),
            "num_labels": int(self.weights.shape[1]),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "params": asdict(self.params),
            "velocity_w": None if self.velocity_w is None else self.velocity_w.tolist(),
            "velocity_b": None if self.velocity_b is None else self.velocity_b.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> SegmenterModel:
        if obj.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {obj.get('version')}")
        w = np.array(obj["weights"], dtype=float).reshape(obj["num_features"], obj["num_labels"])
        b = np.array(obj["bias"], dtype=float)
        vw = obj.get("velocity_w")
        vb = obj.get("velocity_b")
        return cls(w, b, TrainParams(**obj["params"]),
                   None if vw is None else np.array(vw, dtype=float).reshape(w.shape),
                   None if vb is None else np.array(vb, dtype=float))

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path: str | Path) -> SegmenterModel:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class TrainSample:
    features: np.ndarray  # (H, W, D)
    supervision: np.ndarray  # tri-state (H, W)
    mask: np.ndarray | None = None
    sample_id: str = ""


def sample_loss_and_grads(model: SegmenterModel, sample: TrainSample, w_m: float):
    """Loss of one sample and its gradients with respect to weights and bias.

    Goes through the generic probability-space losses; slow but simple.
    """
    probs = model.predict_features(sample.features)
    report = total_loss(probs, sample.supervision, sample.mask, w_m)
    gz = prob_grad_to_logit_grad(report.gradient, probs)
    d = sample.features.shape[-1]
    feats = sample.features.reshape(-1, d)
    gz = gz.reshape(-1, gz.shape[-1])
    return report.total, feats.T @ gz, gz.sum(axis=0)


def _class_major(sample: TrainSample):
    """Contiguous ``(D, N)`` features, ``(L, N)`` one-hot targets and row weights, cached on the sample."""
    key = (id(sample.features), id(sample.supervision), id(sample.mask))
    cache = getattr(sample, "_cache", None)
    if cache is not None and cache[0] == key:
        return cache[1]
    d = sample.features.shape[-1]
    feats_t = np.ascontiguousarray(sample.features.reshape(-1, d).T)
    sup = sample.supervision.ravel()
    conf = sup != UNCERTAIN
    n = int(conf.sum())
    if n == 0:
        raise EmptySupervision("no confident pixels to supervise")
    onehot = np.zeros((NUM_LABELS, sup.size))
    onehot[sup[conf].astype(np.intp), np.flatnonzero(conf)] = 1.0
    mask = None if sample.mask is None else sample.mask.ravel().astype(bool)
    out = (feats_t, onehot, conf, n, mask)
    sample._cache = (key, out)
    return out


def fast_loss_and_grads(model: SegmenterModel, sample: TrainSample, w_m: float):
    """Same quantities as :func:`sample_loss_and_grads`, computed class-major.

    Uses the closed forms of the softmax/cross-entropy gradients; clamped
    probabilities get zero gradient exactly as in the generic path.
    """
    feats_t, onehot, conf, n, mask = _class_major(sample)
    if onehot.shape[0] != model.weights.shape[1]:
        return sample_loss_and_grads(model, sample, w_m)
    z = model.weights.T @ feats_t
    z += model.bias[:, None]
    z -= z.max(axis=0)
    p = np.exp(z, out=z)
    p /= p.sum(axis=0)
    py = (p * onehot).sum(axis=0)
    py_c = np.clip(py, EPS, 1.0)
    loss = -np.log(py_c[conf]).sum() / n
    row = np.where(conf & (py >= EPS), 1.0 / n, 0.0)
    gz = (p - onehot) * row
    if mask is not None and w_m > 0:
        nall = mask.size
        p0 = p[0]
        fg = 1.0 - p0
        fg_c = np.clip(fg, EPS, 1.0)
        p0_c = np.clip(p0, EPS, 1.0)
        loss_m = -(np.log(fg_c[mask]).sum() + np.log(p0_c[~mask]).sum()) / nall
        g0 = np.where(mask, np.where(fg >= EPS, 1.0 / (nall * fg_c), 0.0),
                      np.where(p0 >= EPS, -1.0 / (nall * p0_c), 0.0))
        a = w_m * g0 * p0
        gz -= a * p
        gz[0] += a
        loss = loss + w_m * loss_m
    return float(loss), feats_t @ gz.T, gz.sum(axis=1)


def train_epoch(model: SegmenterModel, samples: list[TrainSample], w_m: float = 1.0,
                rng: np.random.Generator | None = None) -> float:
    """One pass of mini-batch SGD (with momentum) over ``samples``; returns mean loss.

    Samples whose supervision has no confident pixels are skipped.
    """
    p = model.params
    if rng is None:
        rng = np.random.default_rng(p.seed)
    if model.velocity_w is None:
        model.velocity_w = np.zeros_like(model.weights)
        model.velocity_b = np.zeros_like(model.bias)
    order = rng.permutation(len(samples))
    losses = []
    for start in range(0, len(order), p.batch_size):
        gw = np.zeros_like(model.weights)
        gb = np.zeros_like(model.bias)
        used = 0
        for idx in order[start:start + p.batch_size]:
            try:
                loss, sw, sb = fast_loss_and_grads(model, samples[idx], w_m)
            except EmptySupervision:
                log.warning("sample %s has no confident pixels, skipped", samples[idx].sample_id)
                continue
            gw += sw
            gb += sb
            losses.append(loss)
            used += 1
        if used == 0:
            continue
        model.velocity_w = p.momentum * model.velocity_w - p.learning_rate * gw / used
        model.velocity_b = p.momentum * model.velocity_b - p.learning_rate * gb / used
        model.weights = model.weights + model.velocity_w
        model.bias = model.bias + model.velocity_b
    return float(np.mean(losses)) if losses else float("nan")


def train(model: SegmenterModel, samples: list[TrainSample], epochs: int, w_m: float = 1.0,
          seed: int | None = None) -> list[float]:
    rng = np.random.default_rng(model.params.seed if seed is None else seed)
    return [train_epoch(model, samples, w_m, rng) for _ in range(epochs)]
