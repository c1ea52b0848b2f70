"""Pose-based part priors: shape templates, depth ordering and the tri-state map."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateSegment, InsufficientKeypoints
from .geometry import EllipseSpec, PolygonSpec, rasterize
from .labelmap import UNCERTAIN, PartClass
from .pose import Keypoint, PersonPose, recover_missing

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriorConfig:
    c_a: float = 0.6
    c_b: float = 0.22
    k_d: float = 0.1  # dilation side as a fraction of pose height; <= 0 disables U
    min_dilation: int = 3
    leg_shift: str = "half"  # "half": endpoints move +-w/2, "full": +-w
    recovery: bool = True

    def __post_init__(self):
        if self.c_a <= 0 or self.c_b <= 0:
            raise ValueError("c_a and c_b must be positive")
        if self.leg_shift not in ("half", "full"):
            raise ValueError(f"leg_shift must be 'half' or 'full', got {self.leg_shift!r}")


@dataclass(frozen=True)
class PartShape:
    part: PartClass
    shape: EllipseSpec | PolygonSpec
    depth_rank: int  # lower is nearer the camera


# back-to-front paint order inside one person
_PAINT_ORDER = (
    ("torso", PartClass.TORSO),
    ("head", PartClass.HEAD),
    ("u_leg_l", PartClass.ULEG),
    ("u_leg_r", PartClass.ULEG),
    ("l_leg_l", PartClass.LLEG),
    ("l_leg_r", PartClass.LLEG),
    ("u_arm_l", PartClass.UARM),
    ("u_arm_r", PartClass.UARM),
    ("l_arm_l", PartClass.LARM),
    ("l_arm_r", PartClass.LARM),
)
DEPTH_RANK = {name: len(_PAINT_ORDER) - 1 - k for k, (name, _) in enumerate(_PAINT_ORDER)}

_ELLIPSE_PARTS = {
    "head": ("neck", "head_top", PartClass.HEAD),
    "u_arm_l": ("l_shoulder", "l_elbow", PartClass.UARM),
    "u_arm_r": ("r_shoulder", "r_elbow", PartClass.UARM),
    "l_arm_l": ("l_elbow", "l_wrist", PartClass.LARM),
    "l_arm_r": ("r_elbow", "r_wrist", PartClass.LARM),
}


def compute_ellipse(p_i: Keypoint, p_j: Keypoint, c_a: float = 0.6, c_b: float = 0.22) -> EllipseSpec:
    """Ellipse centred between two joints, scaled by their distance."""
    if not (p_i.visible and p_j.visible):
        raise InsufficientKeypoints("both keypoints must be visible")
    if c_a <= 0 or c_b <= 0:
        raise ValueError("scale factors must be positive")
    dx, dy = p_j.x - p_i.x, p_j.y - p_i.y
    d = math.hypot(dx, dy)
    if d == 0:
        raise DegenerateSegment(f"keypoints coincide at ({p_i.x}, {p_i.y})")
    alpha = math.atan2(dy, dx) % math.pi
    if alpha >= math.pi:  # -0.0 % pi style rounding
        alpha = 0.0
    return EllipseSpec((p_i.x + p_j.x) / 2, (p_i.y + p_j.y) / 2, c_a * d, c_b * d, alpha)


def build_torso_polygon(pose: PersonPose, complete: bool = True) -> PolygonSpec:
    """Quadrilateral L-shoulder, R-shoulder, R-hip, L-hip.

    With ``complete`` a single missing corner is filled in as a
    parallelogram: missing = adjacent + (opposite - other adjacent).
    """
    order = ("l_shoulder", "r_shoulder", "r_hip", "l_hip")
    missing = [k for k, n in enumerate(order) if not pose[n].visible]
    if len(missing) > 1 or (missing and not complete):
        raise InsufficientKeypoints(f"torso needs the four corners, missing {[order[k] for k in missing]}")
    pts = [pose[n].xy for n in order]
    if missing:
        k = missing[0]
        prev_, next_, opp = pts[(k - 1) % 4], pts[(k + 1) % 4], pts[(k + 2) % 4]
        pts[k] = (prev_[0] + next_[0] - opp[0], prev_[1] + next_[1] - opp[1])
    return PolygonSpec(tuple(pts))


def build_leg_polygon(pose: PersonPose, side: str, segment: str, shift: str = "half") -> PolygonSpec:
    if side not in ("l", "r") or segment not in ("upper", "lower"):
        raise ValueError(f"bad leg selector side={side!r} segment={segment!r}")
    top, bottom = ("hip", "knee") if segment == "upper" else ("knee", "ankle")
    j0, j1 = f"{side}_{top}", f"{side}_{bottom}"
    if not pose.visible(j0, j1, "l_hip", "r_hip"):
        raise InsufficientKeypoints(f"{segment} {side} leg needs {j0}, {j1} and both hips")
    p0, p1 = pose[j0], pose[j1]
    if (p0.x, p0.y) == (p1.x, p1.y):
        raise DegenerateSegment(f"{j0} and {j1} coincide")
    lh, rh = pose["l_hip"], pose["r_hip"]
    hcx, hcy = (lh.x + rh.x) / 2, (lh.y + rh.y) / 2
    hip = pose[f"{side}_hip"]
    w = math.hypot(hip.x - hcx, hip.y - hcy) * (0.5 if segment == "upper" else 1 / 3)
    if w == 0:
        raise DegenerateSegment("hips coincide, leg width is zero")
    s = w / 2 if shift == "half" else w
    return PolygonSpec(((p0.x - s, p0.y), (p0.x + s, p0.y), (p1.x + s, p1.y), (p1.x - s, p1.y)))


def person_shapes(pose: PersonPose, config: PriorConfig = PriorConfig()) -> list[PartShape]:
    """All part shapes that can be built for one person (recovery per config)."""
    if config.recovery:
        pose = recover_missing(pose)
    shapes = []
    for name, part in _PAINT_ORDER:
        try:
            if name in _ELLIPSE_PARTS:
                a, b, _ = _ELLIPSE_PARTS[name]
                if not pose.visible(a, b):
                    continue
                shape = compute_ellipse(pose[a], pose[b], config.c_a, config.c_b)
            elif name == "torso":
                shape = build_torso_polygon(pose, complete=config.recovery)
            else:
                seg = "upper" if name.startswith("u_") else "lower"
                shape = build_leg_polygon(pose, name[-1], seg, config.leg_shift)
        except (InsufficientKeypoints, DegenerateSegment) as exc:
            log.debug("person %d: skipping %s (%s)", pose.instance_id, name, exc)
            continue
        shapes.append(PartShape(part, shape, DEPTH_RANK[name]))
    return shapes


def paint_shapes(shapes: list[PartShape], height: int, width: int, out: np.ndarray | None = None) -> np.ndarray:
    """Paint shapes far-to-near; result is independent of list order when ranks are distinct."""
    labels = np.zeros((height, width), dtype=np.uint8) if out is None else out
    for ps in sorted(shapes, key=lambda s: -s.depth_rank):
        labels[rasterize(ps.shape, height, width)] = int(ps.part)
    return labels


def person_order(poses: list[PersonPose]) -> list[PersonPose]:
    """Back-to-front: fewest visible joints first, ties by instance id."""
    return sorted(poses, key=lambda p: (p.num_visible, p.instance_id))


def dilation_side(pose: PersonPose, config: PriorConfig) -> int:
    return max(config.min_dilation, int(round(config.k_d * pose.height())))


def rasterize_priors(poses: list[PersonPose], width: int, height: int,
                     config: PriorConfig = PriorConfig()) -> np.ndarray:
    """Tri-state prior map for all persons in one image."""
    if width <= 0 or height <= 0:
        raise ValueError("image size must be positive")
    labels = np.zeros((height, width), dtype=np.uint8)
    estimated_fg = np.zeros((height, width), dtype=bool)
    for pose in person_order([p for p in poses if p.num_visible > 0]):
        own = paint_shapes(person_shapes(pose, config), height, width)
        painted = own > 0
        labels[painted] = own[painted]
        if config.k_d > 0 and painted.any():
            side = dilation_side(pose, config)
            estimated_fg |= ndimage.binary_dilation(painted, structure=np.ones((side, side), dtype=bool))
    fg = labels > 0
    labels[estimated_fg & ~fg] = UNCERTAIN
    return labels
