import math

import numpy as np
import pytest

from asql import (
    CLAMP_EPS,
    LossWeights,
    ShapeError,
    attribute_loss,
    attribute_loss_grad,
    loc_cross_loss,
    loc_cross_loss_grad,
    loc_self_loss,
    loc_self_loss_grad,
    size_loss,
    size_loss_grad,
    total_loss,
)


def finite_difference(f, x0, epsilon=1e-6):
    """Dense central-difference gradient of a scalar function of an array."""
    grad = np.zeros_like(x0, dtype=np.float64)
    flat = grad.ravel()
    base = x0.astype(np.float64).copy()
    for k in range(base.size):
        orig = base.ravel()[k]
        base.ravel()[k] = orig + epsilon
        up = f(base)
        base.ravel()[k] = orig - epsilon
        down = f(base)
        base.ravel()[k] = orig
        flat[k] = (up - down) / (2.0 * epsilon)
    return grad


def rel_dev(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)))


# --- attribute loss ---------------------------------------------------------

def test_attribute_half_everywhere():
    half = np.full((2, 2), 0.5)
    loss = attribute_loss([(half, [half])], eta=1.0)
    assert abs(loss - (math.log(2.0) + 0.25)) < 1e-12


def test_attribute_perfect_overlap_near_zero():
    ones = np.ones((2, 2))
    assert attribute_loss([(ones, [ones])]) < 2e-6


def test_attribute_total_miss():
    ent = np.zeros((2, 2))
    attr = np.ones((2, 2))
    eps = CLAMP_EPS
    bce = -(eps * math.log(1.0 - eps) + (1.0 - eps) * math.log(eps))
    expected = bce + 1.0  # leak term: full attribute mass outside
    assert abs(attribute_loss([(ent, [attr])], eta=1.0) - expected) < 1e-9


def test_attribute_no_attributes_zero():
    ent = np.random.default_rng(0).random((2, 2))
    assert attribute_loss([(ent, [])]) == 0.0
    assert attribute_loss([]) == 0.0


def test_attribute_normalization_over_pairs():
    half = np.full((2, 2), 0.5)
    one = attribute_loss([(half, [half])])
    two = attribute_loss([(half, [half]), (half, [half, half])])
    assert abs(two - one) < 1e-12  # per-entity, per-attribute means


def test_attribute_shape_mismatch():
    with pytest.raises(ShapeError):
        attribute_loss([(np.ones((2, 2)), [np.ones((3, 2))])])


def test_attribute_grad_zero_at_half():
    half = np.full((2, 2), 0.5)
    loss, grads = attribute_loss_grad([(half, [half])], eta=0.0)
    d_ent, d_attrs = grads[0]
    assert np.allclose(d_ent, 0.0) and np.allclose(d_attrs[0], 0.0)


def test_attribute_grad_matches_finite_difference():
    rng = np.random.default_rng(1)
    ent = rng.uniform(0.1, 0.9, (3, 3))
    attr = rng.uniform(0.1, 0.9, (3, 3))
    _, grads = attribute_loss_grad([(ent, [attr])], eta=0.7)
    d_ent, d_attrs = grads[0]
    num_ent = finite_difference(
        lambda m: attribute_loss([(m, [attr])], eta=0.7), ent)
    num_attr = finite_difference(
        lambda m: attribute_loss([(ent, [m])], eta=0.7), attr)
    assert rel_dev(d_ent, num_ent) < 1e-6
    assert rel_dev(d_attrs[0], num_attr) < 1e-6


# --- size loss ---------------------------------------------------------------

def test_size_satisfied_order_zero():
    maps = {1: np.full((2, 2), 0.5), 2: np.full((2, 2), 1.25)}
    assert size_loss((1, 2), maps) == 0.0  # sums 2 then 5, increasing


def test_size_violated_order():
    maps = {1: np.full((2, 2), 1.25), 2: np.full((2, 2), 0.5)}
    assert abs(size_loss((1, 2), maps) - 1.5) < 1e-12  # (5-2)/2


def test_size_single_entity_zero():
    assert size_loss((1,), {1: np.ones((2, 2))}) == 0.0


def test_size_grad_zero_when_satisfied():
    maps = {1: np.full((2, 2), 0.5), 2: np.full((2, 2), 1.25)}
    _, grads = size_loss_grad((1, 2), maps)
    assert np.allclose(grads[1], 0.0) and np.allclose(grads[2], 0.0)


def test_size_grad_coefficients():
    maps = {1: np.full((2, 2), 1.25), 2: np.full((2, 2), 0.5)}
    _, grads = size_loss_grad((1, 2), maps)
    assert np.allclose(grads[1], 0.5) and np.allclose(grads[2], -0.5)


def test_size_grad_matches_finite_difference():
    rng = np.random.default_rng(2)
    a = rng.uniform(0.2, 1.0, (2, 3))
    b = rng.uniform(0.0, 0.4, (2, 3))
    c = rng.uniform(0.2, 1.0, (2, 3))
    _, grads = size_loss_grad((1, 2, 3), {1: a, 2: b, 3: c})
    for entity_id, arr in ((1, a), (2, b), (3, c)):
        def f(m, entity_id=entity_id):
            maps = {1: a, 2: b, 3: c}
            maps[entity_id] = m
            return size_loss((1, 2, 3), maps)
        assert rel_dev(grads[entity_id], finite_difference(f, arr)) < 1e-6


def test_size_missing_map():
    with pytest.raises(ShapeError):
        size_loss((1, 2), {1: np.ones((2, 2))})


# --- cross-attention location loss -------------------------------------------

def test_loc_cross_perfect_overlap():
    mask = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert loc_cross_loss([(mask, mask)]) < 1e-7


def test_loc_cross_disjoint():
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert abs(loc_cross_loss([(a, b)]) - 1.0) < 1e-8


def test_loc_cross_uniform_against_one_hot():
    att = np.full((2, 2), 0.5)
    mask = np.zeros((2, 2))
    mask[0, 0] = 1.0
    assert abs(loc_cross_loss([(att, mask)]) - 2.0 / 3.0) < 1e-8


def test_loc_cross_sums_over_entities():
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert abs(loc_cross_loss([(a, b), (b, a)]) - 2.0) < 1e-7


def test_loc_cross_shape_mismatch():
    with pytest.raises(ShapeError):
        loc_cross_loss([(np.ones((2, 2)), np.ones((2, 3)))])


def test_loc_cross_grad_matches_finite_difference():
    rng = np.random.default_rng(3)
    att = rng.uniform(0.05, 0.95, (3, 3))
    mask = rng.uniform(0.0, 1.0, (3, 3))
    _, grads = loc_cross_loss_grad([(att, mask)])
    numeric = finite_difference(lambda m: loc_cross_loss([(m, mask)]), att)
    assert rel_dev(grads[0], numeric) < 1e-6


# --- self-attention location loss --------------------------------------------

def rank_one(mask):
    flat = mask.ravel()
    return flat[:, None, None] * mask[None, :, :]


def test_loc_self_identical_binary_near_zero():
    mask = rank_one(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert loc_self_loss(mask.copy(), [mask]) < 1e-7


def test_loc_self_one_hot_slices_vs_full_mask():
    attn = np.zeros((4, 2, 2))
    for s in range(4):
        attn[s, s // 2, s % 2] = 1.0
    masks = [rank_one(np.ones((2, 2)))]
    assert abs(loc_self_loss(attn, masks) - 12.0 / 5.0) < 1e-7


def test_loc_self_zero_mask_counts_live_slices():
    attn = np.full((4, 2, 2), 0.25)
    masks = [np.zeros((4, 2, 2))]
    assert abs(loc_self_loss(attn, masks) - 4.0) < 1e-9


def test_loc_self_both_zero_slices_skipped():
    attn = np.zeros((4, 2, 2))
    attn[0] = 0.25
    mask = np.zeros((4, 2, 2))
    mask[0, 0, 0] = 1.0
    # Only slice 0 is live: inter=0.25, sums 1 and 1.
    expected = 1.0 - 0.5 / (2.0 + 1e-8)
    assert abs(loc_self_loss(attn, [mask]) - expected) < 1e-9


def test_loc_self_requires_3d():
    with pytest.raises(ShapeError):
        loc_self_loss(np.ones((2, 2)), [np.ones((2, 2))])


def test_loc_self_shape_mismatch():
    with pytest.raises(ShapeError):
        loc_self_loss(np.ones((4, 2, 2)), [np.ones((4, 3, 2))])


def test_loc_self_grad_matches_finite_difference():
    rng = np.random.default_rng(4)
    attn = rng.uniform(0.05, 0.95, (4, 2, 2))
    masks = [rank_one(rng.uniform(0.0, 1.0, (2, 2)))]
    _, grad = loc_self_loss_grad(attn, masks)
    numeric = finite_difference(lambda a: loc_self_loss(a, masks), attn)
    assert rel_dev(grad, numeric) < 1e-6


def test_loc_self_grad_zero_on_dead_slices():
    attn = np.zeros((4, 2, 2))
    attn[0] = 0.25
    mask = np.zeros((4, 2, 2))
    mask[0, 0, 0] = 1.0
    _, grad = loc_self_loss_grad(attn, [mask])
    assert np.allclose(grad[1:], 0.0)
    assert not np.allclose(grad[0], 0.0)


# --- totals -------------------------------------------------------------------

def test_total_loss_weighting():
    weights = LossWeights(lambda_att=2.0, lambda_size=0.5,
                          lambda_loc_cross=1.0, lambda_loc_self=0.0)
    out = total_loss(1.0, 2.0, 3.0, 4.0, weights)
    assert out.total == 2.0 * 1.0 + 0.5 * 2.0 + 1.0 * 3.0
    assert out.as_dict()["loc_self"] == 4.0


def test_total_loss_zero_weights():
    weights = LossWeights(lambda_att=0.0, lambda_size=0.0,
                          lambda_loc_cross=0.0, lambda_loc_self=0.0)
    assert total_loss(1.0, 2.0, 3.0, 4.0, weights).total == 0.0


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(lambda_att=-1.0)
    with pytest.raises(ValueError):
        LossWeights(clamp_eps=0.5)


def test_weights_round_trip_dict():
    weights = LossWeights(eta=0.25)
    assert LossWeights(**weights.as_dict()) == weights
