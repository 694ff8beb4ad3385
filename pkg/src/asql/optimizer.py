"""Inference-time optimization loop over the synthetic attention source.

Assembles masks and token wiring once per run, then iterates plain
gradient descent on the latent: forward attention, evaluate the combined
loss, chain gradients back, subtract.  Everything is deterministic given
the config seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .attention import (
    DEFAULT_BETA,
    AttentionStack,
    SyntheticLatent,
    backprop_to_latent,
    forward,
)
from .errors import NonFiniteError, ShapeError
from .layout import AssignmentGrid, build_assignment, resample_nearest, self_mask, soft_mask
from .losses import (
    LossBreakdown,
    LossWeights,
    attribute_loss_grad,
    loc_cross_loss_grad,
    loc_self_loss_grad,
    size_loss_grad,
    total_loss,
)
from .provider import GuidancePlan
from .scenegraph import SceneGraph


@dataclass(frozen=True)
class OptimizeConfig:
    """Knobs for one optimization run.

    ``timesteps`` mirrors the sampling-schedule length of the target
    pipeline and is informational only; ``steps`` is what the loop runs.
    """

    alpha: float = 0.1
    steps: int = 200
    timesteps: int = 50
    weights: LossWeights = field(default_factory=LossWeights)
    beta: float = DEFAULT_BETA
    seed: int = 0
    latent_dim: int = 16
    attention_dims: tuple[int, int] | None = None  # None -> grid dims
    per_subregion: bool = False
    loss_threshold: float | None = None
    inner_iterations: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")


def token_layout(
    graph: SceneGraph,
) -> tuple[int, dict[int, int], dict[int, tuple[int, ...]]]:
    """Map entities and attributes to cross-attention columns.

    Uses explicit token indices when the graph carries them; otherwise
    entities take columns 0..|V|-1 in id order and attributes follow.
    Returns (token count, entity_id -> column, entity_id -> attr columns).
    """
    entities = sorted(graph.entities, key=lambda e: e.id)
    explicit = entities[0].token_index is not None if entities else False
    entity_cols: dict[int, int] = {}
    attr_cols: dict[int, tuple[int, ...]] = {}
    if explicit:
        for e in entities:
            entity_cols[e.id] = e.token_index
        next_col = max(entity_cols.values(), default=-1) + 1
        for e in entities:
            if e.attribute_token_indices is not None:
                attr_cols[e.id] = tuple(e.attribute_token_indices)
                next_col = max(next_col, max(e.attribute_token_indices, default=-1) + 1)
        for e in entities:
            if e.id not in attr_cols:
                cols = tuple(range(next_col, next_col + len(e.attributes)))
                next_col += len(e.attributes)
                attr_cols[e.id] = cols
    else:
        next_col = 0
        for e in entities:
            entity_cols[e.id] = next_col
            next_col += 1
        for e in entities:
            cols = tuple(range(next_col, next_col + len(e.attributes)))
            next_col += len(e.attributes)
            attr_cols[e.id] = cols
    n_tokens = max(
        [c for c in entity_cols.values()]
        + [c for cols in attr_cols.values() for c in cols],
        default=-1,
    ) + 1
    return n_tokens, entity_cols, attr_cols


@dataclass
class LossContext:
    """Everything loss evaluation needs, fixed for the whole run."""

    graph: SceneGraph
    plan: GuidancePlan
    grid: AssignmentGrid
    height: int
    width: int
    n_tokens: int
    entity_cols: dict[int, int]
    attr_cols: dict[int, tuple[int, ...]]
    # (entity column, soft-mask values, rank-1 self mask), one per location
    # term -- per entity, or per sub-region when the config asks for it.
    location_terms: list[tuple[int, np.ndarray, np.ndarray]]
    regions: dict[int, np.ndarray]  # attention-resolution binary regions

    def entity_map(self, stack: AttentionStack, entity_id: int) -> np.ndarray:
        return stack.token_map(self.entity_cols[entity_id])

    def evaluate(
        self,
        stack: AttentionStack,
        weights: LossWeights,
        with_grad: bool = False,
    ):
        """Breakdown of the four losses on ``stack``; optionally also the
        total-loss gradients w.r.t. the cross and self tensors."""
        return self.evaluate_arrays(
            stack.cross, stack.self_attn, weights, with_grad)

    def evaluate_arrays(
        self,
        cross: np.ndarray,
        self_attn: np.ndarray | None,
        weights: LossWeights,
        with_grad: bool = False,
    ):
        """Same as evaluate, on raw tensors; a missing self-attention
        tensor contributes zero loc_self loss."""
        if cross.ndim != 2 or cross.shape[0] != self.height * self.width:
            raise ShapeError(
                f"cross must be ({self.height * self.width}, n), got {cross.shape}")
        if cross.shape[1] < self.n_tokens:
            raise ShapeError(
                f"cross has {cross.shape[1]} tokens, need >= {self.n_tokens}")
        ids = sorted(self.entity_cols)
        maps = {
            c: cross[:, c].reshape(self.height, self.width)
            for c in range(cross.shape[1])
        }

        att_pairs = [
            (maps[self.entity_cols[i]], [maps[c] for c in self.attr_cols[i]])
            for i in ids
        ]
        att, att_grads = attribute_loss_grad(
            att_pairs, weights.eta, weights.clamp_eps)

        size_maps = {i: maps[self.entity_cols[i]] for i in ids}
        size, size_grads = size_loss_grad(self.plan.size_order, size_maps)

        cross_pairs = [(maps[col], mask) for col, mask, _ in self.location_terms]
        loc_cross, cross_grads = loc_cross_loss_grad(cross_pairs)

        if self_attn is None:
            loc_self, self_grad = 0.0, None
        else:
            self_masks = [sm for _, _, sm in self.location_terms]
            loc_self, self_grad = loc_self_loss_grad(self_attn, self_masks)

        breakdown = total_loss(att, size, loc_cross, loc_self, weights)
        if not with_grad:
            return breakdown, None, None

        d_cross = np.zeros(cross.shape, dtype=np.float64)

        def add(col: int, g: np.ndarray, lam: float):
            d_cross[:, col] += lam * g.ravel()

        for i, (d_ent, d_attrs) in zip(ids, att_grads):
            add(self.entity_cols[i], d_ent, weights.lambda_att)
            for c, d_a in zip(self.attr_cols[i], d_attrs):
                add(c, d_a, weights.lambda_att)
        for i, g in size_grads.items():
            add(self.entity_cols[i], g, weights.lambda_size)
        for (col, _, _), g in zip(self.location_terms, cross_grads):
            add(col, g, weights.lambda_loc_cross)
        d_self = None if self_grad is None \
            else weights.lambda_loc_self * self_grad
        return breakdown, d_cross, d_self


def build_context(
    graph: SceneGraph,
    plan: GuidancePlan,
    attention_dims: tuple[int, int] | None = None,
    per_subregion: bool = False,
) -> LossContext:
    """Run the layout pipeline and precompute masks and token wiring."""
    grid = build_assignment(plan, graph)
    dims = attention_dims or (grid.height, grid.width)
    n_tokens, entity_cols, attr_cols = token_layout(graph)

    location_terms = []
    regions = {}
    for entity in sorted(graph.entities, key=lambda e: e.id):
        col = entity_cols[entity.id]
        if per_subregion and entity.quantity >= 2:
            subs = range(1, entity.quantity + 1)
        else:
            subs = (None,)
        for sub in subs:
            mask = soft_mask(grid, entity.id, sub, target_dims=dims)
            location_terms.append(
                (col, mask.values, self_mask(mask).values))
        regions[entity.id] = resample_nearest(
            grid.entity == entity.id, dims).astype(bool)
    return LossContext(
        graph, plan, grid, dims[0], dims[1],
        n_tokens, entity_cols, attr_cols, location_terms, regions)


def mass_in_region(attention_map: np.ndarray, region: np.ndarray) -> float:
    """Fraction of a map's total mass falling inside a binary region."""
    if attention_map.shape != region.shape:
        raise ShapeError(
            f"map shape {attention_map.shape} != region {region.shape}")
    total = float(attention_map.sum())
    if total == 0.0:
        return 0.0
    return float(attention_map[region.astype(bool)].sum()) / total


def step(
    latent: SyntheticLatent,
    ctx: LossContext,
    config: OptimizeConfig,
    step_index: int = 0,
) -> tuple[LossBreakdown, AttentionStack]:
    """One forward/backward/update cycle; mutates ``latent.x``.

    The returned breakdown and stack describe the state *before* the
    update.  alpha = 0 leaves the latent bit-identical.
    """
    stack = forward(latent, config.beta)
    breakdown, d_cross, d_self = ctx.evaluate(stack, config.weights, with_grad=True)
    if not np.isfinite(breakdown.total):
        raise NonFiniteError(f"non-finite loss at step {step_index}")
    grad = backprop_to_latent(latent, stack, d_cross, d_self, config.beta)
    if not np.isfinite(grad).all():
        raise NonFiniteError(f"non-finite gradient at step {step_index}")
    if config.alpha != 0.0:
        latent.x = latent.x - config.alpha * grad
    return breakdown, stack


@dataclass
class Trajectory:
    """Record of one optimization run."""

    breakdowns: list[LossBreakdown]
    mass_history: dict[int, list[float]]
    final_stack: AttentionStack
    final_mass: dict[int, float]
    final_latent: SyntheticLatent
    steps_run: int

    def to_jsonl(self) -> str:
        lines = []
        for k, b in enumerate(self.breakdowns):
            lines.append(json.dumps({
                "step": k,
                "losses": b.as_dict(),
                "mass": {i: self.mass_history[i][k] for i in sorted(self.mass_history)},
            }))
        return "\n".join(lines) + "\n"


def run(
    graph: SceneGraph,
    plan: GuidancePlan,
    config: OptimizeConfig | None = None,
) -> Trajectory:
    """Optimize a fresh latent against the plan's layout losses."""
    config = config or OptimizeConfig()
    ctx = build_context(
        graph, plan, config.attention_dims, config.per_subregion)
    latent = SyntheticLatent.create(
        (ctx.height, ctx.width), ctx.n_tokens, config.latent_dim, config.seed)

    breakdowns: list[LossBreakdown] = []
    mass_history: dict[int, list[float]] = {i: [] for i in ctx.regions}
    steps_run = 0
    for k in range(config.steps):
        first = None
        for _ in range(config.inner_iterations):
            breakdown, stack = step(latent, ctx, config, step_index=k)
            if first is None:
                first = (breakdown, stack)
        breakdown, stack = first
        breakdowns.append(breakdown)
        for i in ctx.regions:
            mass_history[i].append(
                mass_in_region(ctx.entity_map(stack, i), ctx.regions[i]))
        steps_run = k + 1
        if (config.loss_threshold is not None
                and breakdown.total <= config.loss_threshold):
            break

    final_stack = forward(latent, config.beta)
    final_mass = {
        i: mass_in_region(ctx.entity_map(final_stack, i), ctx.regions[i])
        for i in ctx.regions
    }
    return Trajectory(
        breakdowns, mass_history, final_stack, final_mass, latent, steps_run)
