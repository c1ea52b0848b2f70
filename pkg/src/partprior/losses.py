"""Partial cross-entropy objectives, supervision fusion and self-paced selection.

Probability maps are ``(H, W, C+1)`` float arrays with class 0 = background.
Loss gradients are returned with respect to the probabilities; use
:func:`prob_grad_to_logit_grad` to push them through a softmax.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySupervision, ShapeMismatch
from .labelmap import UNCERTAIN, regions

EPS = 1e-12


@dataclass
class LossReport:
    structure: float
    mask: float | None
    total: float
    w_m: float
    gradient: np.ndarray = field(repr=False)
    gradient_wrt: str = "probs"
    counts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "structure": self.structure,
            "mask": self.mask,
            "total": self.total,
            "w_m": self.w_m,
            "gradient_wrt": self.gradient_wrt,
            "counts": dict(self.counts),
        }


def _check(pred: np.ndarray, grid: np.ndarray) -> None:
    if pred.ndim != 3 or pred.shape[:2] != grid.shape:
        raise ShapeMismatch(f"prediction {pred.shape} does not match map {grid.shape}")


def region_counts(supervision: np.ndarray) -> dict:
    fg, unc, bkg = regions(supervision)
    return {"F": int(fg.sum()), "U": int(unc.sum()), "B": int(bkg.sum())}


def structure_loss(pred: np.ndarray, supervision: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the confident pixels (F and B) and its gradient.

    Pixels marked uncertain contribute nothing to either output.
    """
    pred = np.asarray(pred, dtype=float)
    supervision = np.asarray(supervision)
    _check(pred, supervision)
    conf = supervision != UNCERTAIN
    n = int(conf.sum())
    if n == 0:
        raise EmptySupervision("no confident pixels to supervise")
    rows, cols = np.nonzero(conf)
    target = supervision[rows, cols].astype(np.intp)
    p = pred[rows, cols, target]
    pc = np.clip(p, EPS, 1.0)
    value = float(-np.log(pc).sum() / n)
    grad = np.zeros_like(pred)
    grad[rows, cols, target] = np.where((p >= EPS) & (p <= 1.0), -1.0 / (n * pc), 0.0)
    return value, grad


def mask_loss(pred: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy between ``1 - pred[..., 0]`` and the person mask."""
    pred = np.asarray(pred, dtype=float)
    mask = np.asarray(mask)
    _check(pred, mask)
    m = mask.astype(bool)
    n = m.size
    p0 = pred[..., 0]
    fg = 1.0 - p0
    fgc = np.clip(fg, EPS, 1.0)
    bgc = np.clip(p0, EPS, 1.0)
    value = float(-(np.log(fgc[m]).sum() + np.log(bgc[~m]).sum()) / n)
    grad = np.zeros_like(pred)
    # d/dp0 of -log(1 - p0) is +1/(1 - p0); of -log(p0) is -1/p0
    g_fg = np.where((fg >= EPS) & (fg <= 1.0), 1.0 / (n * fgc), 0.0)
    g_bg = np.where((p0 >= EPS) & (p0 <= 1.0), -1.0 / (n * bgc), 0.0)
    grad[..., 0] = np.where(m, g_fg, g_bg)
    return value, grad


def total_loss(pred: np.ndarray, supervision: np.ndarray, mask: np.ndarray | None = None,
               w_m: float = 1.0) -> LossReport:
    if w_m < 0:
        raise ValueError("w_m must be non-negative")
    ls, grad = structure_loss(pred, supervision)
    lm = None
    total = ls
    if mask is not None:
        lm, gm = mask_loss(pred, mask)
        if w_m > 0:
            total = ls + w_m * lm
            grad = grad + w_m * gm
    return LossReport(ls, lm, total, w_m, grad, "probs", region_counts(supervision))


def prob_grad_to_logit_grad(grad_p: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Chain rule through a softmax over the last axis."""
    inner = (grad_p * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_p - inner)


def fuse_supervision(prior: np.ndarray, refined: np.ndarray) -> np.ndarray:
    """Keep the prior on F and B; fill the uncertain band from the refined labels."""
    prior = np.asarray(prior)
    refined = np.asarray(refined)
    if prior.shape != refined.shape:
        raise ShapeMismatch(f"prior {prior.shape} vs refined {refined.shape}")
    if (refined == UNCERTAIN).any():
        raise ValueError("refined labels must not contain the uncertain code")
    return np.where(prior == UNCERTAIN, refined, prior).astype(np.uint8)


def discard_probability(mean_confidence: float) -> float:
    return max(0.0, 2.0 - math.exp(mean_confidence))


@dataclass(frozen=True)
class SelectionDecision:
    mean_confidence: float
    discard_probability: float
    kept: bool
    rng_draw: float
    empty_foreground: bool = False

    def to_json(self) -> dict:
        return {
            "mean_confidence": None if self.empty_foreground else self.mean_confidence,
            "discard_probability": self.discard_probability,
            "kept": self.kept,
            "rng_draw": self.rng_draw,
            "empty_foreground": self.empty_foreground,
        }


def mean_foreground_confidence(pred: np.ndarray, supervision: np.ndarray) -> float:
    pred = np.asarray(pred)
    _check(pred, np.asarray(supervision))
    fg, _, _ = regions(supervision)
    if not fg.any():
        raise EmptySupervision("no foreground pixels")
    return float(pred[fg][:, 1:].max(axis=1).mean())


def self_paced_select(pred: np.ndarray, supervision: np.ndarray, rng_seed) -> SelectionDecision:
    """Keep or drop a pseudo-labelled sample by its mean foreground confidence.

    A sample with no foreground is kept and flagged rather than rejected.
    """
    draw = float(np.random.default_rng(rng_seed).random())
    try:
        fbar = mean_foreground_confidence(pred, supervision)
    except EmptySupervision:
        return SelectionDecision(float("nan"), 0.0, True, draw, empty_foreground=True)
    p = discard_probability(fbar)
    return SelectionDecision(fbar, p, draw >= p, draw)
