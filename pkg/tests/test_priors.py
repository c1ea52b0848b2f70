import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from oracles import brute_force_mask, point_in_ellipse, point_in_polygon
from partprior.errors import DegenerateSegment, InsufficientKeypoints
from partprior.geometry import PolygonSpec, rasterize
from partprior.labelmap import UNCERTAIN, PartClass, check_tristate, regions
from partprior.pose import JOINTS, MISSING, Keypoint, PersonPose, recover_missing
from partprior.priors import (DEPTH_RANK, PartShape, PriorConfig, build_leg_polygon, build_torso_polygon,
                              compute_ellipse, dilation_side, paint_shapes, person_order, person_shapes,
                              rasterize_priors)


def kp(x, y):
    return Keypoint(float(x), float(y), True)


def standing(dx=0.0, dy=0.0, instance_id=0, drop=()):
    base = {
        "head_top": (20, 2), "neck": (20, 12), "l_shoulder": (28, 14), "r_shoulder": (12, 14),
        "l_elbow": (32, 24), "r_elbow": (8, 24), "l_wrist": (34, 33), "r_wrist": (6, 33),
        "l_hip": (26, 36), "r_hip": (14, 36), "l_knee": (27, 48), "r_knee": (13, 48),
        "l_ankle": (28, 60), "r_ankle": (12, 60),
    }
    return PersonPose({n: kp(x + dx, y + dy) for n, (x, y) in base.items() if n not in drop}, instance_id)


# -- ellipse parameters

def test_ellipse_horizontal_example():
    e = compute_ellipse(kp(0, 0), kp(10, 0), 0.6, 0.22)
    assert (e.cx, e.cy) == (5.0, 0.0)
    assert e.a == pytest.approx(6.0, abs=1e-9)
    assert e.b == pytest.approx(2.2, abs=1e-9)
    assert e.alpha == pytest.approx(0.0, abs=1e-9)


def test_ellipse_vertical_example():
    e = compute_ellipse(kp(0, 0), kp(0, 8), 0.6, 0.22)
    assert (e.cx, e.cy) == (0.0, 4.0)
    assert e.a == pytest.approx(4.8, abs=1e-9)
    assert e.b == pytest.approx(1.76, abs=1e-9)
    assert e.alpha == pytest.approx(math.pi / 2, abs=1e-9)


def test_ellipse_degenerate():
    with pytest.raises(DegenerateSegment):
        compute_ellipse(kp(5, 5), kp(5, 5))


def test_ellipse_needs_visible_joints():
    with pytest.raises(InsufficientKeypoints):
        compute_ellipse(kp(0, 0), MISSING)


@settings(max_examples=80)
@given(x0=st.floats(0, 30), y0=st.floats(0, 30), x1=st.floats(0, 30), y1=st.floats(0, 30))
def test_ellipse_endpoint_swap_gives_same_pixels(x0, y0, x1, y1):
    if math.hypot(x1 - x0, y1 - y0) < 1e-3:
        return
    e1 = compute_ellipse(kp(x0, y0), kp(x1, y1))
    e2 = compute_ellipse(kp(x1, y1), kp(x0, y0))
    assert 0 <= e1.alpha < math.pi and 0 <= e2.alpha < math.pi
    np.testing.assert_array_equal(rasterize(e1, 32, 32), rasterize(e2, 32, 32))


# -- torso and legs

def test_torso_quad():
    pose = PersonPose({"l_shoulder": kp(10, 10), "r_shoulder": kp(30, 10), "r_hip": kp(28, 50), "l_hip": kp(12, 50)})
    assert build_torso_polygon(pose).vertices == ((10, 10), (30, 10), (28, 50), (12, 50))


def test_torso_parallelogram_completion():
    pose = PersonPose({"l_shoulder": kp(10, 10), "r_shoulder": kp(30, 10), "r_hip": kp(28, 50)})
    assert build_torso_polygon(pose).vertices[3] == (8.0, 50.0)


def test_torso_needs_three_corners():
    with pytest.raises(InsufficientKeypoints):
        build_torso_polygon(PersonPose({"l_shoulder": kp(10, 10), "r_shoulder": kp(30, 10)}))


def test_torso_without_completion():
    pose = PersonPose({"l_shoulder": kp(10, 10), "r_shoulder": kp(30, 10), "r_hip": kp(28, 50)})
    with pytest.raises(InsufficientKeypoints):
        build_torso_polygon(pose, complete=False)


def test_upper_leg_quad():
    pose = PersonPose({"l_hip": kp(10, 50), "r_hip": kp(30, 50), "l_knee": kp(10, 80)})
    quad = build_leg_polygon(pose, "l", "upper")
    assert quad.vertices == ((7.5, 50), (12.5, 50), (12.5, 80), (7.5, 80))


def test_lower_leg_width():
    pose = PersonPose({"l_hip": kp(10, 50), "r_hip": kp(30, 50), "l_knee": kp(10, 80), "l_ankle": kp(10, 110)})
    quad = build_leg_polygon(pose, "l", "lower")
    xs = sorted({x for x, _ in quad.vertices})
    assert xs[1] - xs[0] == pytest.approx(10 / 3, abs=1e-9)
    full = build_leg_polygon(pose, "l", "lower", shift="full")
    xs = sorted({x for x, _ in full.vertices})
    assert xs[1] - xs[0] == pytest.approx(20 / 3, abs=1e-9)


def test_leg_missing_knee():
    with pytest.raises(InsufficientKeypoints):
        build_leg_polygon(PersonPose({"l_hip": kp(10, 50), "r_hip": kp(30, 50)}), "l", "upper")


def test_horizontal_leg_is_degenerate():
    pose = PersonPose({"l_hip": kp(10, 50), "r_hip": kp(30, 50), "l_knee": kp(30, 50)})
    with pytest.raises(DegenerateSegment):
        build_leg_polygon(pose, "l", "upper")


# -- recovery

def test_recover_neck():
    pose = PersonPose({"l_shoulder": kp(10, 10), "r_shoulder": kp(30, 10)})
    neck = recover_missing(pose)["neck"]
    assert neck.visible and (neck.x, neck.y) == (20.0, 10.0)


def test_recover_full_pose_unchanged():
    pose = standing()
    assert recover_missing(pose) == pose


def test_recover_impossible():
    pose = PersonPose({"head_top": kp(3, 3)})
    assert not recover_missing(pose)["neck"].visible


@settings(max_examples=60)
@given(st.lists(st.sampled_from(JOINTS), unique=True))
def test_recover_idempotent(drop):
    once = recover_missing(standing(drop=drop))
    assert recover_missing(once) == once


# -- assembled priors

def test_empty_pose_list():
    out = rasterize_priors([], 4, 4)
    assert out.tolist() == [[0] * 4] * 4


def test_head_circle_matches_brute_force():
    shape = PartShape(PartClass.HEAD, compute_ellipse(kp(0, 1), kp(2, 1), 0.5, 0.5), DEPTH_RANK["head"])
    got = paint_shapes([shape], 3, 3)
    ref = brute_force_mask(lambda x, y: point_in_ellipse(x, y, 1, 1, 1, 1, 0), 3, 3)
    np.testing.assert_array_equal(got == PartClass.HEAD, ref)


def test_fewer_keypoints_painted_behind():
    a = PersonPose({"l_shoulder": kp(10, 10), "l_elbow": kp(10, 30), "r_shoulder": kp(2, 10),
                    "r_elbow": kp(2, 30), "neck": kp(6, 8)}, instance_id=0)  # 5 visible, upper arms
    b = PersonPose({"l_elbow": kp(10, 10), "l_wrist": kp(10, 30), "head_top": kp(30, 30)}, instance_id=1)  # 3 visible
    assert person_order([a, b]) == [b, a]
    out = rasterize_priors([b, a], 40, 40, PriorConfig(k_d=0))
    assert out[20, 10] == PartClass.UARM
    out2 = rasterize_priors([a, b], 40, 40, PriorConfig(k_d=0))
    np.testing.assert_array_equal(out, out2)


def test_visible_count_ties_broken_by_id():
    a = PersonPose({"l_shoulder": kp(10, 10), "l_elbow": kp(10, 30)}, instance_id=3)
    b = PersonPose({"l_elbow": kp(10, 10), "l_wrist": kp(10, 30)}, instance_id=1)
    assert person_order([a, b]) == [b, a]
    assert rasterize_priors([a, b], 20, 40, PriorConfig(k_d=0))[20, 10] == PartClass.UARM


def test_limbs_in_front_of_torso():
    out = rasterize_priors([standing()], 40, 64, PriorConfig(k_d=0))
    # the left upper arm ellipse reaches back over the shoulder into the torso quad
    shapes = {s.part: s for s in person_shapes(standing())}
    torso = rasterize(shapes[PartClass.TORSO].shape, 64, 40)
    arm = np.zeros_like(torso)
    for s in person_shapes(standing()):
        if s.part == PartClass.UARM:
            arm |= rasterize(s.shape, 64, 40)
    overlap = torso & arm
    assert overlap.any()
    assert (out[overlap] == PartClass.UARM).all()


def test_depth_ranks_total_order():
    assert sorted(DEPTH_RANK.values()) == list(range(len(DEPTH_RANK)))
    # lower limbs in front of upper ones, arms in front of legs, torso at the back
    assert DEPTH_RANK["l_arm_l"] < DEPTH_RANK["u_arm_l"] < DEPTH_RANK["l_leg_l"] < DEPTH_RANK["u_leg_l"]
    assert DEPTH_RANK["torso"] == max(DEPTH_RANK.values())


@settings(max_examples=30)
@given(st.randoms(use_true_random=False))
def test_paint_order_independent_of_list_order(rnd):
    shapes = person_shapes(standing())
    shuffled = list(shapes)
    rnd.shuffle(shuffled)
    np.testing.assert_array_equal(paint_shapes(shapes, 64, 40), paint_shapes(shuffled, 64, 40))


def test_shapes_match_brute_force():
    for s in person_shapes(standing()):
        sh = s.shape
        if isinstance(sh, PolygonSpec):
            ref = brute_force_mask(lambda x, y: point_in_polygon(x, y, sh.vertices), 64, 40)
        else:
            ref = brute_force_mask(lambda x, y: point_in_ellipse(x, y, sh.cx, sh.cy, sh.a, sh.b, sh.alpha), 64, 40)
        np.testing.assert_array_equal(rasterize(sh, 64, 40), ref)


@settings(max_examples=40)
@given(st.lists(st.sampled_from(JOINTS), unique=True, max_size=8), st.floats(0.0, 0.3))
def test_tristate_partition(drop, kd):
    out = rasterize_priors([standing(drop=drop), standing(dx=8, instance_id=1)], 48, 64, PriorConfig(k_d=kd))
    check_tristate(out)
    fg, unc, bkg = regions(out)
    assert ((fg.astype(int) + unc + bkg) == 1).all()


@settings(max_examples=25)
@given(dx=st.integers(-6, 6), dy=st.integers(-4, 4))
def test_integer_translation(dx, dy):
    # keep the dilated band clear of the image border in both positions
    base = rasterize_priors([standing(dx=10, dy=8)], 64, 80)
    moved = rasterize_priors([standing(dx=10 + dx, dy=8 + dy)], 64, 80)
    np.testing.assert_array_equal(np.roll(base, (dy, dx), axis=(0, 1)), moved)


def test_dilation_band():
    pose = standing()
    cfg = PriorConfig(k_d=0.2)
    out = rasterize_priors([pose], 40, 64, cfg)
    fg = out != 0
    fg &= out != UNCERTAIN
    side = dilation_side(pose, cfg)
    assert side == round(0.2 * 58)
    grown = ndimage.binary_dilation(fg, structure=np.ones((side, side), bool))
    np.testing.assert_array_equal(out == UNCERTAIN, grown & ~fg)
    assert dilation_side(pose, PriorConfig(k_d=0.01)) == 3


def test_no_dilation_means_no_uncertain():
    out = rasterize_priors([standing()], 40, 64, PriorConfig(k_d=0))
    assert not (out == UNCERTAIN).any()


def test_recovery_toggle_changes_missing_neck_prior():
    pose = standing(drop=("neck",))
    with_rec = rasterize_priors([pose], 40, 64)
    without = rasterize_priors([pose], 40, 64, PriorConfig(recovery=False))
    assert (with_rec == PartClass.HEAD).sum() > 0
    assert (without == PartClass.HEAD).sum() == 0


def test_recovery_completes_torso():
    pose = standing(drop=("l_hip",))
    assert any(s.part == PartClass.TORSO for s in person_shapes(pose))
    assert not any(s.part == PartClass.TORSO for s in person_shapes(pose, PriorConfig(recovery=False)))


def test_wider_ca_grows_arm_prior():
    pose = PersonPose({"l_shoulder": kp(20, 10), "l_elbow": kp(20, 30), "l_wrist": kp(20, 48)})
    small = rasterize_priors([pose], 40, 60, PriorConfig(k_d=0))
    big = rasterize_priors([pose], 40, 60, PriorConfig(c_a=0.9, k_d=0))
    assert (big > 0).sum() > (small > 0).sum()


def test_zero_visible_persons_skipped():
    empty = PersonPose({}, instance_id=5)
    np.testing.assert_array_equal(rasterize_priors([empty, standing()], 40, 64), rasterize_priors([standing()], 40, 64))


def test_prior_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(c_a=0)
    with pytest.raises(ValueError):
        PriorConfig(leg_shift="wide")
    with pytest.raises(ValueError):
        rasterize_priors([], 0, 3)


def test_random_shuffle_of_persons():
    poses = [standing(dx=k * 5, instance_id=k, drop=JOINTS[:k]) for k in range(4)]
    ref = rasterize_priors(poses, 64, 64)
    rnd = random.Random(0)
    for _ in range(5):
        rnd.shuffle(poses)
        np.testing.assert_array_equal(rasterize_priors(poses, 64, 64), ref)
