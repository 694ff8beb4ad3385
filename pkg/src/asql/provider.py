"""Guidance-plan construction: size order, seed locations, constraints.

A :class:`GuidancePlan` bundles the three artifacts that drive layout:
a size-increasing entity ordering, a seed grid marking each entity's
initial cell(s), and the directional constraint set.  Plans come from
the built-in deterministic heuristic or from an external process that
speaks a one-shot JSON request/response protocol on stdin/stdout.
"""
from __future__ import annotations

import graphlib
import json
import shlex
import subprocess
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CapacityError,
    CycleError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .scenegraph import (
    DirectionalConstraint,
    Horizontal,
    SceneGraph,
    Vertical,
    strict_edges,
)

DEFAULT_GRID = (16, 16)
EXTERNAL_TIMEOUT = 60.0

# Coarse visual-size classes (1 = tiny .. 5 = huge) for common nouns.
# Unknown names fall back to class 3.
SIZE_CLASSES: dict[str, int] = {
    "ant": 1, "bee": 1, "butterfly": 1, "coin": 1, "key": 1, "ring": 1,
    "cherry": 1, "strawberry": 1, "egg": 1, "mouse": 1, "spider": 1,
    "cat": 2, "bird": 2, "rabbit": 2, "squirrel": 2, "frog": 2, "book": 2,
    "bottle": 2, "cup": 2, "hat": 2, "shoe": 2, "ball": 2, "apple": 2,
    "orange": 2, "banana": 2, "pizza": 2, "plate": 2, "clock": 2,
    "laptop": 2, "backpack": 2, "vase": 2,
    "dog": 3, "chair": 3, "table": 3, "person": 3, "man": 3, "woman": 3,
    "child": 3, "sheep": 3, "goat": 3, "bench": 3, "bicycle": 3,
    "motorbike": 3, "suitcase": 3, "television": 3, "lamp": 3, "door": 3,
    "horse": 4, "cow": 4, "car": 4, "motorcycle": 4, "sofa": 4, "couch": 4,
    "bed": 4, "boat": 4, "tree": 4, "elephant": 4, "giraffe": 4,
    "truck": 4, "bus": 4, "bear": 4,
    "house": 5, "building": 5, "mountain": 5, "airplane": 5, "train": 5,
    "ship": 5, "bridge": 5, "whale": 5, "castle": 5,
}
DEFAULT_SIZE_CLASS = 3


@dataclass(frozen=True)
class SeedPoint:
    """Reference cell of an entity; x is the column, y the row (0 at top)."""

    entity_id: int
    x: int
    y: int


@dataclass(frozen=True)
class GuidancePlan:
    size_order: tuple[int, ...]
    seed_grid: np.ndarray  # (H, W) int32, 0 = unassigned
    constraints: frozenset[DirectionalConstraint]
    height: int
    width: int

    def to_document(self) -> dict:
        return {
            "size_order": list(self.size_order),
            "seed_grid": self.seed_grid.tolist(),
            "constraints": [
                {"i": con.i, "j": con.j, "vertical": con.vertical.value,
                 "horizontal": con.horizontal.value}
                for con in sorted(self.constraints,
                                  key=lambda c: (c.i, c.j))
            ],
            "grid": {"height": self.height, "width": self.width},
        }


def size_class(name: str) -> int:
    return SIZE_CLASSES.get(name.strip().lower(), DEFAULT_SIZE_CLASS)


def seed_points(plan: GuidancePlan) -> dict[int, SeedPoint]:
    """Per-entity seed point: the floored centroid of its seed cells."""
    points: dict[int, SeedPoint] = {}
    for entity_id in np.unique(plan.seed_grid):
        if entity_id == 0:
            continue
        ys, xs = np.nonzero(plan.seed_grid == entity_id)
        points[int(entity_id)] = SeedPoint(
            int(entity_id), int(np.floor(xs.mean())), int(np.floor(ys.mean())))
    return points


def _same_groups(ids: Sequence[int], same_pairs: Iterable[tuple[int, int]]):
    parent = {i: i for i in ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in same_pairs:
        parent[find(a)] = find(b)
    return {i: find(i) for i in ids}


def _axis_ranks(
    ids: Sequence[int],
    edges: set[tuple[int, int]],
    same_pairs: list[tuple[int, int]],
    axis: str,
) -> dict[int, int]:
    """Longest-path rank per entity after contracting SAME-linked groups."""
    rep = _same_groups(ids, same_pairs)
    group_edges = set()
    for src, dst in edges:
        a, b = rep[src], rep[dst]
        if a == b:
            raise CycleError(
                f"{axis} order: strict edge inside a SAME-linked group "
                f"({src}, {dst})")
        group_edges.add((a, b))

    sorter: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
    for rep_id in set(rep.values()):
        sorter.add(rep_id)
    for src, dst in group_edges:
        sorter.add(dst, src)
    try:
        order = list(sorter.static_order())
    except graphlib.CycleError as exc:
        raise CycleError(f"{axis} order contains a cycle: {exc.args[1]}") from exc

    preds: dict[int, list[int]] = {}
    for src, dst in group_edges:
        preds.setdefault(dst, []).append(src)
    rank: dict[int, int] = {}
    for group in order:
        rank[group] = max((rank[p] + 1 for p in preds.get(group, [])), default=0)
    return {i: rank[rep[i]] for i in ids}


def heuristic_plan(
    graph: SceneGraph,
    constraints: frozenset[DirectionalConstraint],
    dims: tuple[int, int] = DEFAULT_GRID,
) -> GuidancePlan:
    """Deterministic plan: lexicon size order plus rank-based seed placement.

    Entities get per-axis longest-path ranks (SAME-linked entities share a
    rank); rank r of R maps to coordinate floor((r + 0.5) * extent / R).
    Entities landing on an occupied cell are nudged +1 in x (wrapping).
    """
    height, width = dims
    if height < 1 or width < 1:
        raise ValidationError(f"grid dims must be positive, got {dims}")
    ids = graph.entity_ids()

    order = sorted(ids, key=lambda i: (size_class(graph.entity(i).name), i))

    x_edges, y_edges = strict_edges(constraints)
    x_same = [(c.i, c.j) for c in constraints if c.horizontal is Horizontal.SAME]
    y_same = [(c.i, c.j) for c in constraints if c.vertical is Vertical.SAME]
    x_rank = _axis_ranks(ids, x_edges, x_same, "horizontal")
    y_rank = _axis_ranks(ids, y_edges, y_same, "vertical")
    n_x = max(x_rank.values()) + 1
    n_y = max(y_rank.values()) + 1
    if n_x > width:
        raise CapacityError(f"{n_x} horizontal ranks exceed grid width {width}")
    if n_y > height:
        raise CapacityError(f"{n_y} vertical ranks exceed grid height {height}")

    # Entities whose x coordinate is pinned by constraints claim their seat
    # first; unconstrained entities absorb the +1-in-x collision nudges.
    x_linked = {a for pair in x_same for a in pair} | \
        {e for edge in x_edges for e in edge}
    claim_order = sorted(ids, key=lambda i: (i not in x_linked, i))

    taken: set[tuple[int, int]] = set()
    seeds: dict[int, SeedPoint] = {}
    for entity_id in claim_order:
        x = (2 * x_rank[entity_id] + 1) * width // (2 * n_x)
        y = (2 * y_rank[entity_id] + 1) * height // (2 * n_y)
        probes = 0
        while (x, y) in taken:
            x = (x + 1) % width
            probes += 1
            if probes > width:
                raise CapacityError(f"no free seed cell in row {y}")
        taken.add((x, y))
        seeds[entity_id] = SeedPoint(entity_id, x, y)

    seed_grid = np.zeros((height, width), dtype=np.int32)
    for seed in seeds.values():
        seed_grid[seed.y, seed.x] = seed.entity_id
    seed_grid.flags.writeable = False
    return GuidancePlan(tuple(order), seed_grid, constraints, height, width)


_V_PREDICATE = {
    Vertical.ABOVE: lambda yj, yi: yj < yi,
    Vertical.SAME: lambda yj, yi: yj == yi,
    Vertical.BELOW: lambda yj, yi: yj > yi,
}
_H_PREDICATE = {
    Horizontal.LEFT: lambda xj, xi: xj < xi,
    Horizontal.SAME: lambda xj, xi: xj == xi,
    Horizontal.RIGHT: lambda xj, xi: xj > xi,
}


def validate_plan(plan: GuidancePlan, graph: SceneGraph) -> GuidancePlan:
    """Assert every GuidancePlan invariant; returns the plan unchanged.

    Raises ValidationError naming the first violated invariant.
    """
    ids = graph.entity_ids()
    if plan.height < 1 or plan.width < 1:
        raise ValidationError("grid dims must be positive")
    if plan.seed_grid.shape != (plan.height, plan.width):
        raise ValidationError(
            f"seed_grid shape {plan.seed_grid.shape} != "
            f"({plan.height}, {plan.width})")
    if sorted(plan.size_order) != sorted(ids):
        raise ValidationError("size_order not a permutation of entity ids")
    values = set(np.unique(plan.seed_grid).tolist())
    bad = values - {0} - set(ids)
    if bad:
        raise ValidationError(f"seed_grid contains unknown entity ids {sorted(bad)}")
    for entity_id in ids:
        if entity_id not in values:
            raise ValidationError(f"entity {entity_id} has no seed")

    points = seed_points(plan)
    for con in plan.constraints:
        if con.vertical is Vertical.UNCONSTRAINED or \
                con.horizontal is Horizontal.UNCONSTRAINED:
            continue
        if con.i not in points or con.j not in points:
            raise ValidationError(
                f"constraint ({con.i}, {con.j}) references an unseeded entity")
        pi, pj = points[con.i], points[con.j]
        if not _V_PREDICATE[con.vertical](pj.y, pi.y) or \
                not _H_PREDICATE[con.horizontal](pj.x, pi.x):
            raise ValidationError(
                f"seed violates constraint ({con.i}, {con.j}, "
                f"{con.vertical.value}, {con.horizontal.value}): "
                f"seed_{con.j}=({pj.x}, {pj.y}) vs seed_{con.i}=({pi.x}, {pi.y})")
    return plan


def _decode_constraints(raw) -> frozenset[DirectionalConstraint]:
    if not isinstance(raw, list):
        raise ProtocolError("constraints must be a list")
    decoded = []
    for index, item in enumerate(raw):
        if not isinstance(item, dict) or \
                set(item) != {"i", "j", "vertical", "horizontal"}:
            raise ProtocolError(f"constraint {index}: bad fields")
        try:
            vert = Vertical(str(item["vertical"]).upper())
            horiz = Horizontal(str(item["horizontal"]).upper())
        except ValueError as exc:
            raise ProtocolError(f"constraint {index}: {exc}") from exc
        if not isinstance(item["i"], int) or not isinstance(item["j"], int):
            raise ProtocolError(f"constraint {index}: ids must be integers")
        decoded.append(DirectionalConstraint(item["i"], item["j"], vert, horiz))

    # Symmetry closure; an explicit entry that contradicts the inverse of
    # another entry is an invariant violation.
    by_pair = {(c.i, c.j): c for c in decoded}
    closed = dict(by_pair)
    for con in decoded:
        inv = con.inverse()
        existing = closed.get((inv.i, inv.j))
        if existing is None:
            closed[(inv.i, inv.j)] = inv
        elif existing != inv:
            raise ValidationError(
                f"constraints for pair ({inv.i}, {inv.j}) break symmetry closure")
    return frozenset(closed.values())


def decode_plan(document: dict, dims: tuple[int, int]) -> GuidancePlan:
    """Decode a provider response document into a GuidancePlan."""
    height, width = dims
    if not isinstance(document, dict):
        raise ProtocolError("response must be a JSON object")
    missing = {"size_order", "seed_grid", "constraints"} - set(document)
    if missing:
        raise ProtocolError(f"response missing fields {sorted(missing)}")
    size_order = document["size_order"]
    if not isinstance(size_order, list) or \
            not all(isinstance(v, int) for v in size_order):
        raise ProtocolError("size_order must be a list of integers")
    rows = document["seed_grid"]
    if not isinstance(rows, list) or len(rows) != height or \
            any(not isinstance(r, list) or len(r) != width for r in rows):
        raise ProtocolError(f"seed_grid must be {height}x{width} integers")
    try:
        seed_grid = np.array(rows, dtype=np.int32)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"seed_grid not integral: {exc}") from exc
    seed_grid.flags.writeable = False
    constraints = _decode_constraints(document["constraints"])
    return GuidancePlan(tuple(size_order), seed_grid, constraints, height, width)


def external_plan(
    graph: SceneGraph,
    dims: tuple[int, int],
    endpoint: str | Sequence[str],
    timeout: float = EXTERNAL_TIMEOUT,
) -> GuidancePlan:
    """Obtain a validated plan from an external provider process.

    The request document goes to the process's stdin, the response is read
    from its stdout; exit status must be 0.
    """
    height, width = dims
    request = json.dumps({
        "caption": graph.caption,
        "scene_graph": graph.to_document(),
        "grid": {"height": height, "width": width},
    })
    argv = shlex.split(endpoint) if isinstance(endpoint, str) else list(endpoint)
    try:
        proc = subprocess.run(
            argv, input=request.encode("utf-8"), capture_output=True,
            timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise TransportError(f"provider timed out after {timeout}s") from exc
    except OSError as exc:
        raise TransportError(f"provider failed to launch: {exc}") from exc
    if proc.returncode != 0:
        raise TransportError(
            f"provider exited with status {proc.returncode}: "
            f"{proc.stderr.decode('utf-8', 'replace').strip()}")
    try:
        document = json.loads(proc.stdout.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"provider response is not valid JSON: {exc}") from exc
    plan = decode_plan(document, dims)
    return validate_plan(plan, graph)
