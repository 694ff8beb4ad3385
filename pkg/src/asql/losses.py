"""Guidance losses over attention maps and their analytic gradients.

Four terms: attribute binding (BCE plus a leakage regularizer between an
entity map and each of its attribute maps), size ordering (hinge on
attention-mass sums along the size-increasing order), cross-attention
location (2-D Dice against soft masks), and self-attention location
(slice-wise 3-D Dice against rank-1 self masks).  All reductions are
fixed-order so results are bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ShapeError

DICE_EPS = 1e-8
CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_att: float = 1.0
    lambda_size: float = 1.0
    lambda_loc_cross: float = 1.0
    lambda_loc_self: float = 1.0
    eta: float = 1.0
    clamp_eps: float = CLAMP_EPS

    def __post_init__(self):
        for name in ("lambda_att", "lambda_size", "lambda_loc_cross",
                     "lambda_loc_self", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must lie in (0, 0.5)")

    def as_dict(self) -> dict:
        return {
            "lambda_att": self.lambda_att,
            "lambda_size": self.lambda_size,
            "lambda_loc_cross": self.lambda_loc_cross,
            "lambda_loc_self": self.lambda_loc_self,
            "eta": self.eta,
            "clamp_eps": self.clamp_eps,
        }


@dataclass(frozen=True)
class LossBreakdown:
    att: float
    size: float
    loc_cross: float
    loc_self: float
    total: float

    def as_dict(self) -> dict:
        return {"att": self.att, "size": self.size, "loc_cross": self.loc_cross,
                "loc_self": self.loc_self, "total": self.total}


def _check_same_shape(maps, what: str):
    shapes = {m.shape for m in maps}
    if len(shapes) > 1:
        raise ShapeError(f"{what}: mismatched shapes {sorted(shapes)}")


def attribute_loss(
    pairs: Sequence[tuple[np.ndarray, Sequence[np.ndarray]]],
    eta: float = 1.0,
    clamp_eps: float = CLAMP_EPS,
) -> float:
    """Mean BCE between each entity map and its attribute maps, plus an
    eta-weighted penalty on attribute mass outside the entity map.

    ``pairs`` lists every entity (entity map, attribute maps); entities
    without attributes contribute zero.
    """
    return _attribute(pairs, eta, clamp_eps, with_grad=False)[0]


def attribute_loss_grad(
    pairs: Sequence[tuple[np.ndarray, Sequence[np.ndarray]]],
    eta: float = 1.0,
    clamp_eps: float = CLAMP_EPS,
):
    """Returns (loss, per-pair gradients): for each input pair, the
    gradient w.r.t. the entity map and a list of gradients w.r.t. each
    attribute map."""
    return _attribute(pairs, eta, clamp_eps, with_grad=True)


def _attribute(pairs, eta, clamp_eps, with_grad):
    if not pairs:
        return 0.0, []
    all_maps = [m for ent, attrs in pairs for m in (ent, *attrs)]
    _check_same_shape(all_maps, "attribute maps")
    n_entities = len(pairs)
    eps = clamp_eps
    total = 0.0
    grads = []
    for ent_map, attr_maps in pairs:
        n_cells = ent_map.size
        d_ent = np.zeros_like(ent_map, dtype=np.float64) if with_grad else None
        d_attrs = []
        k = len(attr_maps)
        for attr_map in attr_maps:
            t = np.clip(ent_map, eps, 1.0 - eps)
            p = np.clip(attr_map, eps, 1.0 - eps)
            bce = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
            leak = attr_map * (1.0 - ent_map)
            total += (float(bce.mean()) + eta * float(leak.mean())) \
                / (n_entities * k)
            if with_grad:
                scale = 1.0 / (n_entities * k * n_cells)
                p_open = (attr_map >= eps) & (attr_map <= 1.0 - eps)
                t_open = (ent_map >= eps) & (ent_map <= 1.0 - eps)
                d_attr = scale * (
                    np.where(p_open, (p - t) / (p * (1.0 - p)), 0.0)
                    + eta * (1.0 - ent_map))
                d_ent += scale * (
                    np.where(t_open, np.log1p(-p) - np.log(p), 0.0)
                    - eta * attr_map)
                d_attrs.append(d_attr)
        if with_grad:
            grads.append((d_ent, d_attrs))
    return total, grads


def size_loss(
    size_order: Sequence[int],
    maps: Mapping[int, np.ndarray],
) -> float:
    """Hinge penalty on attention-mass sums decreasing along the
    size-increasing order; a single entity gives zero."""
    return _size(size_order, maps, with_grad=False)[0]


def size_loss_grad(size_order: Sequence[int], maps: Mapping[int, np.ndarray]):
    """Returns (loss, {entity_id: gradient w.r.t. its map})."""
    return _size(size_order, maps, with_grad=True)


def _size(size_order, maps, with_grad):
    missing = [i for i in size_order if i not in maps]
    if missing:
        raise ShapeError(f"size_order entities without maps: {missing}")
    _check_same_shape([maps[i] for i in size_order], "size maps")
    m = len(size_order)
    sums = [float(maps[i].sum()) for i in size_order]
    total = 0.0
    coeff = [0.0] * m
    for k in range(m - 1):
        gap = sums[k] - sums[k + 1]
        if gap > 0.0:
            total += gap / m
            coeff[k] += 1.0 / m
            coeff[k + 1] -= 1.0 / m
    if not with_grad:
        return total, None
    grads = {
        entity_id: np.full_like(maps[entity_id], c, dtype=np.float64)
        for entity_id, c in zip(size_order, coeff)
    }
    return total, grads


def loc_cross_loss(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """Sum over entities of the 2-D Dice loss between an attention map and
    its soft mask."""
    return _loc_cross(pairs, with_grad=False)[0]


def loc_cross_loss_grad(pairs: Sequence[tuple[np.ndarray, np.ndarray]]):
    """Returns (loss, [gradient w.r.t. each attention map])."""
    return _loc_cross(pairs, with_grad=True)


def _loc_cross(pairs, with_grad):
    total = 0.0
    grads = []
    for att_map, mask in pairs:
        if att_map.shape != mask.shape:
            raise ShapeError(
                f"map shape {att_map.shape} != mask shape {mask.shape}")
        inter = float((att_map * mask).sum())
        denom = float(att_map.sum()) + float(mask.sum()) + DICE_EPS
        total += 1.0 - 2.0 * inter / denom
        if with_grad:
            grads.append(-2.0 * mask / denom + 2.0 * inter / denom ** 2)
    return total, grads if with_grad else None


def loc_self_loss(self_attn: np.ndarray, masks: Sequence[np.ndarray]) -> float:
    """Slice-wise Dice between the self-attention stack and each rank-1
    mask; slices where both operands are all-zero contribute nothing."""
    return _loc_self(self_attn, masks, with_grad=False)[0]


def loc_self_loss_grad(self_attn: np.ndarray, masks: Sequence[np.ndarray]):
    """Returns (loss, gradient w.r.t. the self-attention stack)."""
    return _loc_self(self_attn, masks, with_grad=True)


def _loc_self(self_attn, masks, with_grad):
    if self_attn.ndim != 3:
        raise ShapeError(f"self-attention must be 3-D, got {self_attn.shape}")
    n_slices = self_attn.shape[0]
    a_sums = self_attn.reshape(n_slices, -1).sum(axis=1)
    total = 0.0
    grad = np.zeros_like(self_attn, dtype=np.float64) if with_grad else None
    for mask in masks:
        if mask.shape != self_attn.shape:
            raise ShapeError(
                f"self mask shape {mask.shape} != attention {self_attn.shape}")
        inter = (self_attn * mask).reshape(n_slices, -1).sum(axis=1)
        g_sums = mask.reshape(n_slices, -1).sum(axis=1)
        live = ~((a_sums == 0.0) & (g_sums == 0.0))
        denom = a_sums + g_sums + DICE_EPS
        dice = 1.0 - 2.0 * inter / denom
        total += float(dice[live].sum())
        if with_grad:
            factor = np.where(live, 1.0, 0.0)
            grad += factor[:, None, None] * (
                -2.0 * mask / denom[:, None, None]
                + (2.0 * inter / denom ** 2)[:, None, None])
    return total, grad


def total_loss(
    att: float,
    size: float,
    loc_cross: float,
    loc_self: float,
    weights: LossWeights,
) -> LossBreakdown:
    """Weighted combination of the four component losses."""
    total = (weights.lambda_att * att + weights.lambda_size * size
             + weights.lambda_loc_cross * loc_cross
             + weights.lambda_loc_self * loc_self)
    return LossBreakdown(att, size, loc_cross, loc_self, total)
