import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_difference, relative_error
from partprior.errors import EmptySupervision, ShapeMismatch
from partprior.labelmap import UNCERTAIN
from partprior.losses import (discard_probability, fuse_supervision, mask_loss, self_paced_select, structure_loss,
                              total_loss)

U = UNCERTAIN


def random_problem(rng, h=3, w=4, labels=7):
    # probabilities kept away from 0 so central differences stay inside the domain
    pred = rng.dirichlet(np.ones(labels), size=(h, w)) * 0.9 + 0.1 / labels
    sup = rng.choice([0, 1, 2, 3, 4, 5, 6, U], size=(h, w)).astype(np.uint8)
    sup[0, 0] = rng.integers(0, 7)
    mask = rng.integers(0, 2, size=(h, w)).astype(bool)
    return pred, sup, mask


def test_structure_loss_one_hot_is_zero():
    pred = np.zeros((1, 1, 7))
    pred[0, 0, 1] = 1.0
    value, grad = structure_loss(pred, np.array([[1]], np.uint8))
    assert value == 0.0
    assert grad[0, 0, 1] == -1.0


def test_structure_loss_uniform_is_ln7():
    value, _ = structure_loss(np.full((1, 1, 7), 1 / 7), np.array([[3]], np.uint8))
    assert value == pytest.approx(math.log(7), abs=1e-9)
    assert value == pytest.approx(1.9459, abs=1e-4)


def test_structure_loss_all_uncertain():
    with pytest.raises(EmptySupervision):
        structure_loss(np.full((2, 2, 7), 1 / 7), np.full((2, 2), U, np.uint8))


def test_structure_loss_is_a_mean():
    pred = np.full((2, 2, 7), 1 / 7)
    sup = np.array([[0, U], [U, 5]], np.uint8)
    pred[0, 0] = np.eye(7)[0]
    value, _ = structure_loss(pred, sup)
    assert value == pytest.approx(math.log(7) / 2, abs=1e-12)


def test_mask_loss_half_is_ln2():
    pred = np.full((3, 3, 7), 0.5 / 6)
    pred[..., 0] = 0.5
    value, _ = mask_loss(pred, np.ones((3, 3), bool))
    assert value == pytest.approx(math.log(2), abs=1e-9)


def test_mask_loss_perfect_predictions():
    pred = np.zeros((2, 2, 7))
    pred[..., 1] = 1.0
    assert mask_loss(pred, np.ones((2, 2), bool))[0] == 0.0
    bg = np.zeros((1, 1, 7))
    bg[..., 0] = 1.0
    assert mask_loss(bg, np.zeros((1, 1), bool))[0] == 0.0


def test_total_loss_combination():
    rng = np.random.default_rng(0)
    pred, sup, mask = random_problem(rng)
    ls, _ = structure_loss(pred, sup)
    lm, _ = mask_loss(pred, mask)
    assert total_loss(pred, sup, mask, 1.0).total == pytest.approx(ls + lm, abs=1e-12)
    assert total_loss(pred, sup, None, 1.0).total == ls
    assert total_loss(pred, sup, mask, 0.0).total == ls
    with pytest.raises(ValueError):
        total_loss(pred, sup, mask, -1.0)


def test_total_loss_linear_in_w_m():
    rng = np.random.default_rng(1)
    pred, sup, mask = random_problem(rng)
    r0 = total_loss(pred, sup, mask, 0.5)
    r1 = total_loss(pred, sup, mask, 1.5)
    r2 = total_loss(pred, sup, mask, 2.5)
    assert r2.total - r1.total == pytest.approx(r1.total - r0.total, abs=1e-12)
    np.testing.assert_allclose(r2.gradient - r1.gradient, r1.gradient - r0.gradient, atol=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        h, w = (int(v) for v in rng.integers(1, 4, size=2))
        pred, sup, mask = random_problem(rng, h, w)
        _, gs = structure_loss(pred, sup)
        _, gm = mask_loss(pred, mask)
        fd_s = central_difference(lambda x: structure_loss(x, sup)[0], pred)
        fd_m = central_difference(lambda x: mask_loss(x, mask)[0], pred)
        worst = max(worst, relative_error(gs, fd_s), relative_error(gm, fd_m))
    assert worst < 1e-3


def test_uncertain_pixels_are_ignored():
    rng = np.random.default_rng(3)
    pred, sup, _ = random_problem(rng, 4, 4)
    value, grad = structure_loss(pred, sup)
    other = pred.copy()
    unc = sup == U
    other[unc] = rng.dirichlet(np.ones(7), size=int(unc.sum()))
    value2, grad2 = structure_loss(other, sup)
    assert value2 == value
    np.testing.assert_array_equal(grad2, grad)
    assert not grad[unc].any()


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        structure_loss(np.full((2, 2, 7), 1 / 7), np.zeros((2, 3), np.uint8))
    with pytest.raises(ShapeMismatch):
        mask_loss(np.full((2, 2, 7), 1 / 7), np.zeros((3, 2), bool))


def test_fusion_examples():
    prior = np.array([[2, U, 0]], np.uint8)  # UArm, uncertain, background
    refined = np.array([[1, 5, 0]], np.uint8)  # Torso, LLeg, background
    assert fuse_supervision(prior, refined).tolist() == [[2, 5, 0]]
    with pytest.raises(ValueError):
        fuse_supervision(prior, prior)


@given(st.lists(st.sampled_from([0, 1, 2, 3, 4, 5, 6, U]), min_size=1, max_size=30), st.integers(0, 2**32 - 1))
def test_fusion_keeps_confident_prior(codes, seed):
    prior = np.array([codes], np.uint8)
    refined = np.random.default_rng(seed).integers(0, 7, size=prior.shape).astype(np.uint8)
    out = fuse_supervision(prior, refined)
    conf = prior != U
    np.testing.assert_array_equal(out[conf], prior[conf])
    assert not (out == U).any()


def test_discard_probability_values():
    assert discard_probability(math.log(2)) == pytest.approx(0.0, abs=1e-12)
    assert discard_probability(0.0) == 1.0
    assert discard_probability(0.5) == pytest.approx(0.3513, abs=1e-4)
    assert discard_probability(0.9) == 0.0


@given(st.floats(0, 1), st.floats(0, 1))
def test_discard_probability_monotone(a, b):
    lo, hi = sorted((a, b))
    assert 0.0 <= discard_probability(hi) <= discard_probability(lo) <= 1.0


def test_self_paced_select():
    pred = np.zeros((2, 2, 7))
    pred[..., 0] = 0.5
    pred[..., 3] = 0.5  # foreground confidence 0.5 everywhere
    sup = np.array([[3, 0], [U, 3]], np.uint8)
    d = self_paced_select(pred, sup, 11)
    assert d.mean_confidence == pytest.approx(0.5)
    assert d.discard_probability == pytest.approx(2 - math.exp(0.5))
    assert d.kept == (d.rng_draw >= d.discard_probability)
    assert self_paced_select(pred, sup, 11) == d


def test_self_paced_empty_foreground_is_kept():
    d = self_paced_select(np.full((2, 2, 7), 1 / 7), np.zeros((2, 2), np.uint8), 0)
    assert d.kept and d.empty_foreground
    assert d.to_json()["mean_confidence"] is None
