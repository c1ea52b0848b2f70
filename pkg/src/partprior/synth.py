"""Procedural corpus of posed stick-body figures with dense part masks.

Each part class is painted from its own noisy colour family over a smooth,
nearly gray textured background, so a per-pixel colour model has something
to learn.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InvalidConfig
from .geometry import EllipseSpec, PolygonSpec, rasterize
from .labelmap import PartClass, write_label_png, write_mask_png, write_rgb_png
from .pose import MISSING, Keypoint, PersonPose, save_poses

PART_COLORS = {
    PartClass.HEAD: (235, 150, 90),
    PartClass.TORSO: (200, 40, 50),
    PartClass.UARM: (240, 200, 40),
    PartClass.LARM: (60, 180, 80),
    PartClass.ULEG: (40, 70, 200),
    PartClass.LLEG: (150, 60, 190),
}
FIGURE_JITTER = 15.0
PIXEL_NOISE = 6.0
BACKGROUND_TINT = 15.0


def _rot(vx: float, vy: float, angle: float) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    return vx * c - vy * s, vx * s + vy * c


def random_pose(rng: np.random.Generator, cx: float, top: float, h: float, instance_id: int) -> PersonPose:
    """Joint positions of one upright figure of height ``h`` with random limb angles."""
    j = {}
    j["head_top"] = (0.0, 0.0)
    j["neck"] = (rng.uniform(-0.02, 0.02) * h, 0.17 * h)
    nx, ny = j["neck"]
    half_sh = rng.uniform(0.10, 0.13) * h
    j["l_shoulder"] = (nx + half_sh, ny + 0.03 * h)
    j["r_shoulder"] = (nx - half_sh, ny + 0.03 * h)
    half_hip = rng.uniform(0.08, 0.10) * h
    j["l_hip"] = (half_hip, 0.52 * h)
    j["r_hip"] = (-half_hip, 0.52 * h)
    for side, sign in (("l", 1.0), ("r", -1.0)):
        # angles measured from straight down, positive = away from the body
        up = math.radians(rng.uniform(-20, 100))
        low = up + math.radians(rng.uniform(-30, 90))
        sx, sy = j[f"{side}_shoulder"]
        ex, ey = sx + sign * math.sin(up) * 0.17 * h, sy + math.cos(up) * 0.17 * h
        wx, wy = ex + sign * math.sin(low) * 0.15 * h, ey + math.cos(low) * 0.15 * h
        j[f"{side}_elbow"], j[f"{side}_wrist"] = (ex, ey), (wx, wy)
        thigh = math.radians(rng.uniform(-5, 25))
        shin = thigh + math.radians(rng.uniform(-20, 15))
        hx, hy = j[f"{side}_hip"]
        kx, ky = hx + sign * math.sin(thigh) * 0.23 * h, hy + math.cos(thigh) * 0.23 * h
        ax, ay = kx + sign * math.sin(shin) * 0.25 * h, ky + math.cos(shin) * 0.25 * h
        j[f"{side}_knee"], j[f"{side}_ankle"] = (kx, ky), (ax, ay)
    tilt = math.radians(rng.uniform(-8, 8))
    pivot = (0.0, 0.52 * h)
    joints = {}
    for name, (x, y) in j.items():
        rx, ry = _rot(x - pivot[0], y - pivot[1], tilt)
        joints[name] = Keypoint(cx + rx + pivot[0], top + ry + pivot[1], True)
    return PersonPose(joints, instance_id)


def _capsule(h: int, w: int, a, b, radius: float) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    t = np.clip(((xs - ax) * vx + (ys - ay) * vy) / max(vx * vx + vy * vy, 1e-12), 0.0, 1.0)
    return (xs - ax - t * vx) ** 2 + (ys - ay - t * vy) ** 2 <= radius * radius


def render_parts(pose: PersonPose, height: int, width: int, body_h: float) -> list[tuple[PartClass, np.ndarray]]:
    """Ground-truth part masks of one figure in back-to-front paint order."""
    p = {n: (kp.x, kp.y) for n, kp in pose.joints.items()}
    out = []
    torso = rasterize(PolygonSpec((p["l_shoulder"], p["r_shoulder"], p["r_hip"], p["l_hip"])), height, width)
    grow = max(1, int(round(0.035 * body_h)))
    torso = ndimage.binary_dilation(torso, structure=np.ones((2 * grow + 1,) * 2, bool))
    out.append((PartClass.TORSO, torso))
    nx, ny = p["neck"]
    tx, ty = p["head_top"]
    d = math.hypot(tx - nx, ty - ny)
    alpha = math.atan2(ty - ny, tx - nx) % math.pi
    head = EllipseSpec((nx + tx) / 2, (ny + ty) / 2, 0.62 * d, 0.48 * d, alpha if alpha < math.pi else 0.0)
    out.append((PartClass.HEAD, rasterize(head, height, width)))
    for side in ("l", "r"):
        out.append((PartClass.ULEG, _capsule(height, width, p[f"{side}_hip"], p[f"{side}_knee"], 0.055 * body_h)))
    for side in ("l", "r"):
        out.append((PartClass.LLEG, _capsule(height, width, p[f"{side}_knee"], p[f"{side}_ankle"], 0.045 * body_h)))
    for side in ("l", "r"):
        a, b = p[f"{side}_shoulder"], p[f"{side}_elbow"]
        out.append((PartClass.UARM, _capsule(height, width, a, b, 0.28 * math.dist(a, b))))
    for side in ("l", "r"):
        a, b = p[f"{side}_elbow"], p[f"{side}_wrist"]
        out.append((PartClass.LARM, _capsule(height, width, a, b, 0.26 * math.dist(a, b))))
    return out


def _background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    base = rng.uniform(60, 170) + rng.uniform(-BACKGROUND_TINT, BACKGROUND_TINT, size=3)
    low = ndimage.gaussian_filter(rng.normal(0, 1, size=(height, width)), sigma=6)
    low *= 40.0 / max(low.std(), 1e-9)
    stripes = 12.0 * np.sin(np.arange(width) / rng.uniform(2.5, 6.0) + rng.uniform(0, 6.3))
    return base + (low + stripes[None, :])[..., None] + rng.normal(0, 8.0, size=(height, width, 3))


def _fit_inside(pose: PersonPose, width: int, height: int, pad: float = 1.0) -> PersonPose:
    """Shift a figure so every joint lies inside the frame, when it fits at all."""
    xs = [kp.x for kp in pose.joints.values()]
    ys = [kp.y for kp in pose.joints.values()]

    def shift(lo: float, hi: float, size: int) -> float:
        if hi - lo > size - 1 - 2 * pad:
            return 0.0
        return max(0.0, pad - lo) - max(0.0, hi - (size - 1 - pad))

    return pose.translated(shift(min(xs), max(xs), width), shift(min(ys), max(ys), height))


def make_sample(rng: np.random.Generator, width: int, height: int, occlusion_rate: float,
                missing_joint_rate: float, max_figures: int = 3):
    """One synthetic sample: (image, gt labels, full mask, annotated poses)."""
    image = _background(rng, height, width)
    labels = np.zeros((height, width), dtype=np.uint8)
    n_fig = int(rng.integers(1, max_figures + 1))
    poses = []
    centers: list[float] = []
    for k in range(n_fig):
        body_h = rng.uniform(0.45, 0.75) * height
        top = rng.uniform(2, max(2.0, height - body_h - 3))
        margin = 0.3 * body_h
        if centers and rng.random() < occlusion_rate:
            cx = centers[int(rng.integers(len(centers)))] + rng.uniform(-0.3, 0.3) * body_h
        else:
            cx = rng.uniform(margin, width - margin)
        cx = float(np.clip(cx, margin, width - margin))
        centers.append(cx)
        pose = _fit_inside(random_pose(rng, cx, top, body_h, instance_id=k), width, height)
        jitter = {c: np.asarray(col) + rng.normal(0, FIGURE_JITTER, 3) for c, col in PART_COLORS.items()}
        for part, mask in render_parts(pose, height, width, body_h):
            labels[mask] = int(part)
            image[mask] = jitter[part] + rng.normal(0, PIXEL_NOISE, size=(int(mask.sum()), 3))
        joints = {}
        for name, kp in pose.joints.items():
            inside = 0 <= kp.x <= width - 1 and 0 <= kp.y <= height - 1
            dropped = rng.random() < missing_joint_rate
            joints[name] = kp if inside and not dropped else MISSING
        poses.append(PersonPose(joints, k))
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    return image, labels, (labels > 0).astype(np.uint8), poses


def generate_synthetic_corpus(out_dir: str | Path, n_train: int, n_test: int, width: int = 96, height: int = 96,
                              seed: int = 17, occlusion_rate: float = 0.3, missing_joint_rate: float = 0.0) -> dict:
    """Write a corpus in the dataset layout and return a summary."""
    if n_train < 1 or n_test < 1:
        raise InvalidConfig("n_train and n_test must be at least 1")
    if width < 16 or height < 16:
        raise InvalidConfig("images must be at least 16x16")
    for name, rate in (("occlusion_rate", occlusion_rate), ("missing_joint_rate", missing_joint_rate)):
        if not 0.0 <= rate <= 1.0:
            raise InvalidConfig(f"{name} must lie in [0, 1], got {rate}")
    out = Path(out_dir)
    ids = [f"{k:05d}" for k in range(n_train + n_test)]
    all_poses = {}
    n_persons = 0
    n_visible = 0
    for k, sid in enumerate(ids):
        rng = np.random.default_rng([seed, k])
        image, labels, mask, poses = make_sample(rng, width, height, occlusion_rate, missing_joint_rate)
        write_rgb_png(out / "images" / f"{sid}.png", image)
        write_label_png(out / "gt_masks" / f"{sid}.png", labels)
        write_mask_png(out / "full_masks" / f"{sid}.png", mask)
        all_poses[sid] = poses
        n_persons += len(poses)
        n_visible += sum(p.num_visible for p in poses)
    save_poses(out / "poses.json", all_poses)
    summary = {
        "n_train": n_train,
        "n_test": n_test,
        "width": width,
        "height": height,
        "seed": seed,
        "occlusion_rate": occlusion_rate,
        "missing_joint_rate": missing_joint_rate,
        "persons": n_persons,
        "visible_joints": n_visible,
    }
    with open(out / "split.json", "w") as fh:
        json.dump({"train": ids[:n_train], "test": ids[n_train:]}, fh, indent=1)
    with open(out / "meta.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return summary
