"""Label codes, tri-state maps and their indexed-PNG file format.

A tri-state map is a ``(H, W)`` uint8 array: 0 is background (B), 1..6 are
part classes (F) and :data:`UNCERTAIN` (255) marks the uncertain band (U).
"""
from __future__ import annotations

import enum
from pathlib import Path

import numpy as np
from PIL import Image


class PartClass(enum.IntEnum):
    BKG = 0
    HEAD = 1
    TORSO = 2
    UARM = 3
    LARM = 4
    ULEG = 5
    LLEG = 6


NUM_PARTS = 6
NUM_LABELS = NUM_PARTS + 1
UNCERTAIN = 255

CLASS_NAMES = ["bkg", "head", "torso", "u_arm", "l_arm", "u_leg", "l_leg"]

# display palette only; pixel values are the class codes
_PALETTE = [
    (0, 0, 0),
    (220, 20, 60),
    (255, 140, 0),
    (255, 215, 0),
    (50, 205, 50),
    (30, 144, 255),
    (148, 0, 211),
]


def _palette_bytes() -> list[int]:
    pal = [0] * 768
    for code, rgb in enumerate(_PALETTE):
        pal[3 * code:3 * code + 3] = rgb
    pal[3 * UNCERTAIN:3 * UNCERTAIN + 3] = (255, 255, 255)
    return pal


def regions(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean masks ``(F, U, B)`` of a tri-state map."""
    labels = np.asarray(labels)
    unc = labels == UNCERTAIN
    bkg = labels == PartClass.BKG
    fg = ~unc & ~bkg
    return fg, unc, bkg


def check_tristate(labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"label map must be 2-D, got shape {labels.shape}")
    ok = (labels <= NUM_PARTS) | (labels == UNCERTAIN)
    if not ok.all():
        bad = np.unique(labels[~ok])
        raise ValueError(f"label map holds codes outside 0..6/255: {bad.tolist()}")


def write_label_png(path: str | Path, labels: np.ndarray) -> None:
    """Write a label grid as an 8-bit palette PNG (pixel value = class code)."""
    labels = np.asarray(labels)
    check_tristate(labels)
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    img.putpalette(_palette_bytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG", optimize=False)


def read_label_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode not in ("P", "L"):
            raise ValueError(f"{path}: expected an indexed or grayscale PNG, got mode {img.mode}")
        labels = np.array(img, dtype=np.uint8)
    return labels


def write_rgb_png(path: str | Path, image: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def read_rgb_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def write_mask_png(path: str | Path, mask: np.ndarray) -> None:
    """Binary person mask stored as 0/1 grayscale."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(path, format="PNG")


def read_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return (np.array(img.convert("L")) > 0).astype(np.uint8)
