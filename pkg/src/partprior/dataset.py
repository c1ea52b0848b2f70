"""On-disk dataset layout.

    images/<id>.png        RGB input
    poses.json             image id -> list of persons (native pose format)
    full_masks/<id>.png    optional binary person mask
    gt_masks/<id>.png      optional dense part labels (evaluation only)
    split.json             {"train": [...], "test": [...]}; all ids train when absent
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labelmap import read_label_png, read_mask_png, read_rgb_png
from .pose import PersonPose, load_poses


@dataclass
class Sample:
    sample_id: str
    image: np.ndarray
    poses: list[PersonPose]
    full_mask: np.ndarray | None = None
    gt: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]


@dataclass
class Dataset:
    root: Path
    train: list[Sample] = field(default_factory=list)
    test: list[Sample] = field(default_factory=list)


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    if not (root / "images").is_dir():
        raise FileNotFoundError(f"{root}: no images/ directory")
    poses_path = root / "poses.json"
    poses = load_poses(poses_path, recover=False) if poses_path.exists() else {}
    split_path = root / "split.json"
    if split_path.exists():
        with open(split_path) as fh:
            split = json.load(fh)
    else:
        split = {"train": sorted(p.stem for p in (root / "images").glob("*.png")), "test": []}

    def load(sid: str) -> Sample:
        mask_p = root / "full_masks" / f"{sid}.png"
        gt_p = root / "gt_masks" / f"{sid}.png"
        return Sample(
            sid,
            read_rgb_png(root / "images" / f"{sid}.png"),
            poses.get(sid, []),
            read_mask_png(mask_p) if mask_p.exists() else None,
            read_label_png(gt_p) if gt_p.exists() else None,
        )

    return Dataset(root, [load(s) for s in split.get("train", [])], [load(s) for s in split.get("test", [])])
