"""Scene-graph layout guidance: grids, soft masks, and attention losses."""

from .attention import (
    DEFAULT_BETA,
    AttentionStack,
    SyntheticLatent,
    backprop_to_latent,
    forward,
    grad_check,
    sigmoid_attention,
)
from .errors import (
    CapacityError,
    ConflictError,
    CycleError,
    DocumentSyntaxError,
    EmptyRegionError,
    FormatError,
    GuidanceError,
    NonFiniteError,
    ProtocolError,
    QuantityError,
    ShapeError,
    StarvationError,
    TransportError,
    ValidationError,
)
from .layout import (
    AssignmentGrid,
    SelfMask,
    SoftMask,
    assign_cells,
    build_assignment,
    distance_transform,
    inject_quantities,
    membership_field,
    pair_feasibility,
    render_ascii,
    resample_nearest,
    self_mask,
    soft_mask,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    CLAMP_EPS,
    DICE_EPS,
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
from .optimizer import (
    LossContext,
    OptimizeConfig,
    Trajectory,
    build_context,
    mass_in_region,
    run,
    step,
    token_layout,
)
from .provider import (
    DEFAULT_GRID,
    GuidancePlan,
    SeedPoint,
    external_plan,
    heuristic_plan,
    decode_plan,
    seed_points,
    size_class,
    validate_plan,
)
from .scenegraph import (
    DirectionalConstraint,
    Entity,
    Horizontal,
    RelationTriple,
    SceneGraph,
    Vertical,
    default_lexicon,
    derive_constraints,
    parse_scene_graph,
)
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"
