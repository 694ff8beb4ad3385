"""Cell assignment and mask construction.

Turns a guidance plan into a full grid assignment: binary membership
fields (the logical AND of all pairwise directional feasibilities),
highest-membership cell assignment with distance/id tie-breaking, and
quantity sub-region injection.  Regions are softened into masks via an
exact Euclidean distance transform and extended to rank-1 3-D masks for
self-attention supervision.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyRegionError,
    QuantityError,
    ShapeError,
    StarvationError,
    ValidationError,
)
from .provider import GuidancePlan, SeedPoint, seed_points
from .scenegraph import DirectionalConstraint, Horizontal, SceneGraph, Vertical


@dataclass(frozen=True)
class AssignmentGrid:
    """Per-cell (entity_id, subregion_index) assignment; 0 = background."""

    entity: np.ndarray    # (H, W) int32
    subregion: np.ndarray  # (H, W) int32
    height: int
    width: int

    def region(self, entity_id: int, subregion: int | None = None) -> np.ndarray:
        """Boolean region of an entity (or one of its sub-regions)."""
        mask = self.entity == entity_id
        if subregion:
            mask &= self.subregion == subregion
        return mask


@dataclass(frozen=True)
class SoftMask:
    """Distance-transform-softened region at the attention resolution.

    Values are 0 outside the region and in (0, 1] inside, with the deepest
    cell at exactly 1.  ``subregion`` 0 means the whole entity.
    """

    values: np.ndarray  # (H', W') float64
    entity_id: int
    subregion: int = 0


@dataclass(frozen=True)
class SelfMask:
    """Rank-1 extension: values[s, y, x] = flat(mask)[s] * mask[y, x]."""

    values: np.ndarray  # (H'*W', H', W') float64
    entity_id: int
    subregion: int = 0


def pair_feasibility(
    constraint: DirectionalConstraint,
    seed_i: SeedPoint | tuple[int, int],
    cell: tuple[int, int],
) -> int:
    """1 iff the cell satisfies both axis predicates against seed_i."""
    xi, yi = (seed_i.x, seed_i.y) if isinstance(seed_i, SeedPoint) else seed_i
    x, y = cell
    h_ok = {
        Horizontal.RIGHT: x > xi,
        Horizontal.LEFT: x < xi,
        Horizontal.SAME: x == xi,
        Horizontal.UNCONSTRAINED: True,
    }[constraint.horizontal]
    v_ok = {
        Vertical.ABOVE: y < yi,
        Vertical.BELOW: y > yi,
        Vertical.SAME: y == yi,
        Vertical.UNCONSTRAINED: True,
    }[constraint.vertical]
    return int(h_ok and v_ok)


def membership_field(
    entity_id: int,
    seeds: Mapping[int, SeedPoint],
    constraints: frozenset[DirectionalConstraint],
    dims: tuple[int, int],
) -> np.ndarray:
    """Binary (H, W) membership of one entity: AND over its pairwise masks.

    Only constraints targeting this entity (j == entity_id) apply; an
    entity with no incoming constraints gets the all-ones field.
    """
    height, width = dims
    field = np.ones((height, width), dtype=bool)
    xs = np.arange(width)
    ys = np.arange(height)
    for con in constraints:
        if con.j != entity_id or con.i == entity_id:
            continue
        if con.i not in seeds:
            raise ValidationError(
                f"constraint ({con.i}, {con.j}) references an unseeded entity")
        seed = seeds[con.i]
        fx = {
            Horizontal.RIGHT: xs > seed.x,
            Horizontal.LEFT: xs < seed.x,
            Horizontal.SAME: xs == seed.x,
            Horizontal.UNCONSTRAINED: np.ones(width, dtype=bool),
        }[con.horizontal]
        fy = {
            Vertical.ABOVE: ys < seed.y,
            Vertical.BELOW: ys > seed.y,
            Vertical.SAME: ys == seed.y,
            Vertical.UNCONSTRAINED: np.ones(height, dtype=bool),
        }[con.vertical]
        field &= fy[:, None] & fx[None, :]
    return field


def assign_cells(
    fields: Mapping[int, np.ndarray],
    seeds: Mapping[int, SeedPoint],
) -> AssignmentGrid:
    """Assign each cell to the entity with membership 1.

    Ties among several membership-1 entities go to the entity whose seed
    is nearest in squared Euclidean distance, then to the lowest id.
    Cells feasible for no entity become background (0, 0).

    Raises StarvationError when some entity ends up with zero cells.
    """
    ids = sorted(fields)
    if not ids:
        raise ValidationError("no membership fields given")
    height, width = fields[ids[0]].shape
    stack = np.zeros((len(ids), height, width), dtype=bool)
    dist = np.empty((len(ids), height, width), dtype=np.float64)
    ys, xs = np.mgrid[0:height, 0:width]
    for k, entity_id in enumerate(ids):
        if fields[entity_id].shape != (height, width):
            raise ShapeError("membership fields disagree on grid shape")
        stack[k] = fields[entity_id]
        seed = seeds[entity_id]
        dist[k] = (xs - seed.x) ** 2 + (ys - seed.y) ** 2
    dist[~stack] = np.inf
    best = np.argmin(dist, axis=0)  # first (lowest-id) index on ties
    entity = np.asarray(ids, dtype=np.int32)[best]
    entity[~stack.any(axis=0)] = 0

    for entity_id in ids:
        if not (entity == entity_id).any():
            raise StarvationError(
                f"entity {entity_id} received no cells "
                "(constraints jointly unsatisfiable with the seeds)")
    entity.flags.writeable = False
    subregion = np.zeros((height, width), dtype=np.int32)
    subregion.flags.writeable = False
    return AssignmentGrid(entity, subregion, height, width)


def inject_quantities(grid: AssignmentGrid, graph: SceneGraph) -> AssignmentGrid:
    """Split each entity region into q equal contiguous sub-regions.

    Cells are swept along the region bounding box's longer axis (columns
    when width >= height, rows otherwise) and cut into q blocks whose
    sizes differ by at most one, larger blocks first.
    """
    if grid.subregion.any():
        raise ValidationError("grid already carries sub-region indices")
    subregion = np.zeros_like(grid.subregion)
    subregion.flags.writeable = True
    for ent in graph.entities:
        ys, xs = np.nonzero(grid.entity == ent.id)
        n = len(ys)
        if n == 0:
            continue
        if n < ent.quantity:
            raise QuantityError(
                f"entity {ent.id} ({ent.name}): region of {n} cells cannot "
                f"host {ent.quantity} sub-regions")
        box_w = xs.max() - xs.min() + 1
        box_h = ys.max() - ys.min() + 1
        if box_w >= box_h:
            order = np.lexsort((ys, xs))  # columns left-to-right, top-down
        else:
            order = np.lexsort((xs, ys))  # rows top-to-bottom, left-right
        base, extra = divmod(n, ent.quantity)
        start = 0
        for block in range(ent.quantity):
            size = base + (1 if block < extra else 0)
            sel = order[start:start + size]
            subregion[ys[sel], xs[sel]] = block + 1
            start += size
    subregion.flags.writeable = False
    return AssignmentGrid(grid.entity, subregion, grid.height, grid.width)


def resample_nearest(mask: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resample; target pixel (Y, X) reads source
    (Y*H//H', X*W//W')."""
    height, width = mask.shape
    th, tw = target_dims
    sy = (np.arange(th) * height) // th
    sx = (np.arange(tw) * width) // tw
    return mask[np.ix_(sy, sx)]


def distance_transform(region: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance of each inside cell to the nearest outside
    cell, with the grid padded by one ring of outside cells."""
    padded = np.pad(region.astype(bool), 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)
    return dist[1:-1, 1:-1]


def soft_mask(
    grid: AssignmentGrid,
    entity_id: int,
    subregion: int | None = None,
    target_dims: tuple[int, int] | None = None,
) -> SoftMask:
    """Distance-transform-softened mask of a region, normalized to max 1.

    The binary region is resampled to the attention resolution first, so
    the softening happens at the resolution the losses operate at.
    """
    region = grid.region(entity_id, subregion)
    if not region.any():
        raise EmptyRegionError(
            f"entity {entity_id}"
            + (f" sub-region {subregion}" if subregion else "")
            + " occupies no cells")
    if target_dims is not None and target_dims != region.shape:
        region = resample_nearest(region, target_dims)
        if not region.any():
            raise EmptyRegionError(
                f"entity {entity_id} region vanished at resolution {target_dims}")
    dist = distance_transform(region)
    values = dist / dist.max()
    values.flags.writeable = False
    return SoftMask(values, entity_id, subregion or 0)


def self_mask(mask: SoftMask) -> SelfMask:
    """Outer product of a soft mask with its row-major flattening."""
    flat = mask.values.ravel()
    values = flat[:, None, None] * mask.values[None, :, :]
    values.flags.writeable = False
    return SelfMask(values, mask.entity_id, mask.subregion)


def build_assignment(plan: GuidancePlan, graph: SceneGraph) -> AssignmentGrid:
    """Full pipeline: membership fields -> cell assignment -> quantities."""
    seeds = seed_points(plan)
    dims = (plan.height, plan.width)
    fields = {
        ent.id: membership_field(ent.id, seeds, plan.constraints, dims)
        for ent in graph.entities
    }
    grid = assign_cells(fields, seeds)
    return inject_quantities(grid, graph)


_ASCII = ".123456789abcdefghijklmnopqrstuvwxyz"


def render_ascii(grid: AssignmentGrid, verbose: bool = False) -> str:
    """One character per cell ('.' background); ``id:sub`` pairs in verbose
    mode."""
    lines = []
    for y in range(grid.height):
        if verbose:
            lines.append(" ".join(
                f"{grid.entity[y, x]}:{grid.subregion[y, x]}"
                for x in range(grid.width)))
        else:
            lines.append("".join(
                _ASCII[e] if e < len(_ASCII) else "?"
                for e in grid.entity[y]))
    return "\n".join(lines)
