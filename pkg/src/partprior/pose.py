"""Keypoint containers, the 14-joint skeleton, pose files and missing-joint recovery."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ParseError, SchemaError

JOINTS = (
    "head_top",
    "neck",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
)

# COCO 17-keypoint order -> canonical joint (None = dropped)
COCO_TO_CANONICAL = (
    "head_top",  # nose
    None,  # left_eye
    None,  # right_eye
    None,  # left_ear
    None,  # right_ear
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
)


@dataclass(frozen=True)
class Keypoint:
    x: float = 0.0
    y: float = 0.0
    visible: bool = False

    def __post_init__(self):
        if self.visible and not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"visible keypoint needs finite coordinates, got ({self.x}, {self.y})")

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


MISSING = Keypoint()


@dataclass(frozen=True)
class PersonPose:
    joints: dict[str, Keypoint] = field(default_factory=dict)
    instance_id: int = 0

    def __post_init__(self):
        unknown = set(self.joints) - set(JOINTS)
        if unknown:
            raise SchemaError(f"unknown joint names: {sorted(unknown)}")
        full = {name: self.joints.get(name, MISSING) for name in JOINTS}
        object.__setattr__(self, "joints", full)

    def __getitem__(self, name: str) -> Keypoint:
        return self.joints[name]

    def visible(self, *names: str) -> bool:
        return all(self.joints[n].visible for n in names)

    @property
    def num_visible(self) -> int:
        return sum(kp.visible for kp in self.joints.values())

    def height(self) -> float:
        """Vertical extent of the visible joints (0 when fewer than two)."""
        ys = [kp.y for kp in self.joints.values() if kp.visible]
        return max(ys) - min(ys) if ys else 0.0

    def with_joint(self, name: str, kp: Keypoint) -> PersonPose:
        joints = dict(self.joints)
        joints[name] = kp
        return replace(self, joints=joints)

    def without(self, *names: str) -> PersonPose:
        joints = dict(self.joints)
        for n in names:
            joints[n] = MISSING
        return replace(self, joints=joints)

    def translated(self, dx: float, dy: float) -> PersonPose:
        joints = {n: Keypoint(kp.x + dx, kp.y + dy, True) if kp.visible else kp
                  for n, kp in self.joints.items()}
        return replace(self, joints=joints)

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "joints": {n: [kp.x, kp.y, int(kp.visible)] for n, kp in self.joints.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> PersonPose:
        if not isinstance(obj, dict) or "joints" not in obj:
            raise SchemaError("person entry must be an object with a 'joints' field")
        joints = {}
        for name, val in obj["joints"].items():
            if not (isinstance(val, (list, tuple)) and len(val) == 3):
                raise SchemaError(f"joint {name!r} must be [x, y, visible]")
            x, y, v = val
            joints[name] = Keypoint(float(x), float(y), True) if v else MISSING
        return cls(joints=joints, instance_id=int(obj.get("instance_id", 0)))


def recover_missing(pose: PersonPose) -> PersonPose:
    """Fill joints that can be estimated from their neighbours.

    Only the neck rule lives here (midpoint of the two shoulders); torso
    completion happens when the torso polygon is built.
    """
    if not pose["neck"].visible and pose.visible("l_shoulder", "r_shoulder"):
        ls, rs = pose["l_shoulder"], pose["r_shoulder"]
        neck = Keypoint((ls.x + rs.x) / 2, (ls.y + rs.y) / 2, True)
        pose = pose.with_joint("neck", neck)
    return pose


# ---------------------------------------------------------------- pose files

def _load_json(path: str | Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def is_coco(obj) -> bool:
    return isinstance(obj, dict) and "annotations" in obj and isinstance(obj["annotations"], list)


def coco_to_poses(obj: dict, recover: bool = True, min_visible: int = 2) -> dict[str, list[PersonPose]]:
    """Map COCO keypoint annotations to canonical poses grouped by image.

    Images are keyed by ``file_name`` stem when the ``images`` table gives
    one, otherwise by the stringified ``image_id``. Persons with fewer than
    ``min_visible`` annotated canonical joints are dropped.
    """
    names: dict = {}
    for im in obj.get("images", []) or []:
        if isinstance(im, dict) and "id" in im:
            fname = im.get("file_name")
            names[im["id"]] = Path(fname).stem if fname else str(im["id"])
    out: dict[str, list[PersonPose]] = {key: [] for key in names.values()}
    for ann in obj["annotations"]:
        if not isinstance(ann, dict) or "keypoints" not in ann or "image_id" not in ann:
            raise SchemaError("annotation needs 'image_id' and 'keypoints'")
        kps = ann["keypoints"]
        if not isinstance(kps, list) or len(kps) != 3 * len(COCO_TO_CANONICAL):
            raise SchemaError(f"annotation {ann.get('id')}: expected 51 keypoint values")
        joints = {}
        for k, target in enumerate(COCO_TO_CANONICAL):
            x, y, v = kps[3 * k:3 * k + 3]
            if target is not None and v > 0:
                joints[target] = Keypoint(float(x), float(y), True)
        pose = PersonPose(joints=joints, instance_id=int(ann.get("id", len(out))))
        if pose.num_visible < min_visible:
            continue
        if recover:
            pose = recover_missing(pose)
        key = names.get(ann["image_id"], str(ann["image_id"]))
        out.setdefault(key, []).append(pose)
    return out


def ingest_coco_keypoints(path: str | Path, recover: bool = True) -> dict[str, list[PersonPose]]:
    obj = _load_json(path)
    if not is_coco(obj):
        raise SchemaError(f"{path}: not a COCO keypoint annotation file")
    return coco_to_poses(obj, recover=recover)


def load_poses(path: str | Path, recover: bool = True, default_id: str | None = None) -> dict[str, list[PersonPose]]:
    """Read a pose file in native or COCO form.

    Native form is either a list of persons (one image, keyed by
    ``default_id`` or the file stem) or an object mapping image id to such
    a list.
    """
    obj = _load_json(path)
    if is_coco(obj):
        return coco_to_poses(obj, recover=recover)
    if isinstance(obj, list):
        obj = {default_id or Path(path).stem: obj}
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: unrecognised pose file layout")
    out = {}
    for key, persons in obj.items():
        if not isinstance(persons, list):
            raise SchemaError(f"{path}: entry {key!r} must be a list of persons")
        poses = [PersonPose.from_json(p) for p in persons]
        out[str(key)] = [recover_missing(p) for p in poses] if recover else poses
    return out


def save_poses(path: str | Path, poses: dict[str, list[PersonPose]]) -> None:
    data = {key: [p.to_json() for p in persons] for key, persons in poses.items()}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
