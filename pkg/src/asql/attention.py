"""Attention tensors: sigmoid-rescored cross maps plus a synthetic source.

The synthetic source keeps the optimization structure of a diffusion
pipeline at desk scale: a free latent (one row per spatial location) is
projected through a frozen query matrix, scored against frozen token
keys, and squashed elementwise by a steep sigmoid.  Self-attention is the
row-softmax of the query self-similarity.  Gradients flow only into the
latent; the projections never change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

DEFAULT_BETA = 100.0
# Frozen seed for the query/key projections so identical configurations
# reproduce bit-identical attention everywhere.
PROJECTION_SEED = 7


@dataclass(frozen=True)
class AttentionStack:
    """Cross maps (one column per token) and a 3-D self-attention map."""

    cross: np.ndarray      # (H*W, n) in (0, 1)
    self_attn: np.ndarray  # (H*W, H, W), rows sum to 1
    height: int
    width: int

    @property
    def n_tokens(self) -> int:
        return self.cross.shape[1]

    def token_map(self, token: int) -> np.ndarray:
        """One token's cross-attention map reshaped to (H, W)."""
        return self.cross[:, token].reshape(self.height, self.width)


@dataclass
class SyntheticLatent:
    """Optimizable state; w_q and keys are frozen projections."""

    x: np.ndarray      # (H*W, d), the only tensor optimization may touch
    w_q: np.ndarray    # (d, d)
    keys: np.ndarray   # (n, d)
    height: int
    width: int

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @classmethod
    def create(
        cls,
        dims: tuple[int, int],
        n_tokens: int,
        d: int,
        seed: int,
        projection_seed: int = PROJECTION_SEED,
    ) -> "SyntheticLatent":
        """Unit-variance latent from ``seed``; projections from
        ``projection_seed``, entries scaled by 1/d so that sigmoid scores
        start in their responsive range."""
        height, width = dims
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((height * width, d))
        proj = np.random.default_rng(projection_seed)
        w_q = proj.standard_normal((d, d)) / d
        keys = proj.standard_normal((n_tokens, d)) / d
        w_q.flags.writeable = False
        keys.flags.writeable = False
        return cls(x, w_q, keys, height, width)


def sigmoid_attention(scores: np.ndarray, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Elementwise sigmoid(beta * score); columns stay independent."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    z = beta * np.asarray(scores, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(latent: SyntheticLatent, beta: float = DEFAULT_BETA) -> AttentionStack:
    """Latent -> queries -> (sigmoid cross maps, softmax self-attention)."""
    scale = 1.0 / math.sqrt(latent.d)
    q = latent.x @ latent.w_q
    cross = sigmoid_attention(q @ latent.keys.T * scale, beta)
    self_rows = _row_softmax(q @ q.T * scale)
    m = latent.height * latent.width
    return AttentionStack(
        cross, self_rows.reshape(m, latent.height, latent.width),
        latent.height, latent.width)


def backprop_to_latent(
    latent: SyntheticLatent,
    stack: AttentionStack,
    d_cross: np.ndarray,
    d_self: np.ndarray,
    beta: float = DEFAULT_BETA,
) -> np.ndarray:
    """Chain gradients at the attention outputs back to the latent.

    ``stack`` must be the forward output for ``latent`` at the same beta.
    """
    if d_cross.shape != stack.cross.shape:
        raise ShapeError(
            f"d_cross shape {d_cross.shape} != cross {stack.cross.shape}")
    if d_self.shape != stack.self_attn.shape:
        raise ShapeError(
            f"d_self shape {d_self.shape} != self {stack.self_attn.shape}")
    scale = 1.0 / math.sqrt(latent.d)
    q = latent.x @ latent.w_q

    d_scores = d_cross * stack.cross * (1.0 - stack.cross) * beta
    d_q = d_scores @ latent.keys * scale

    m = stack.self_attn.shape[0]
    rows = stack.self_attn.reshape(m, m)
    d_rows = d_self.reshape(m, m)
    d_logits = rows * (d_rows - (rows * d_rows).sum(axis=1, keepdims=True))
    d_q += (d_logits + d_logits.T) @ q * scale

    return d_q @ latent.w_q.T


def grad_check(f, x0: np.ndarray, epsilon: float = 1e-4) -> float:
    """Max relative deviation between f's analytic gradient and central
    finite differences.

    ``f(x)`` must return ``(value, gradient)`` with gradient shaped like x.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _, analytic = f(x0)
    worst = 0.0
    flat = x0.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + epsilon
        up, _ = f(x0)
        flat[idx] = orig - epsilon
        down, _ = f(x0)
        flat[idx] = orig
        numeric = (up - down) / (2.0 * epsilon)
        dev = abs(analytic.ravel()[idx] - numeric) / (abs(numeric) + 1e-8)
        worst = max(worst, dev)
    return worst
