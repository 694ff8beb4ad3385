"""Command-line surface: parse / plan / grid / masks / loss / optimize."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import GuidanceError, ValidationError
from .layout import build_assignment, render_ascii, soft_mask
from .losses import LossWeights
from .optimizer import OptimizeConfig, build_context, run
from .provider import (
    DEFAULT_GRID,
    GuidancePlan,
    external_plan,
    heuristic_plan,
)
from .scenegraph import SceneGraph, derive_constraints, parse_scene_graph
from .tensorfile import read_tensor, write_tensor


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        dims = (int(h), int(w))
    except ValueError:
        raise ValidationError(f"expected HxW dimensions, got {text!r}")
    if dims[0] < 1 or dims[1] < 1:
        raise ValidationError(f"dimensions must be positive, got {text!r}")
    return dims


def _load_graph(path: str) -> SceneGraph:
    return parse_scene_graph(Path(path).read_text(encoding="utf-8"))


def _resolve_plan(graph: SceneGraph, args) -> GuidancePlan:
    dims = _parse_dims(args.grid)
    provider = args.provider or os.environ.get("ASQL_PROVIDER") or "heuristic"
    if provider == "heuristic":
        return heuristic_plan(graph, derive_constraints(graph), dims)
    if provider.startswith("exec:"):
        return external_plan(graph, dims, provider[len("exec:"):])
    raise ValidationError(
        f"unknown provider {provider!r}; use 'heuristic' or 'exec:<cmd>'")


def _parse_weights(args) -> LossWeights:
    lams = (1.0, 1.0, 1.0, 1.0)
    if args.weights:
        parts = args.weights.split(",")
        if len(parts) != 4:
            raise ValidationError(
                f"--weights needs four comma-separated values, got {args.weights!r}")
        try:
            lams = tuple(float(p) for p in parts)
        except ValueError:
            raise ValidationError(f"bad --weights value {args.weights!r}")
    return LossWeights(lambda_att=lams[0], lambda_size=lams[1],
                       lambda_loc_cross=lams[2], lambda_loc_self=lams[3],
                       eta=args.eta)


def _write_pgm(values: np.ndarray, path: Path) -> None:
    levels = np.round(np.clip(values, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = levels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + levels.tobytes())


def _add_plan_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", default=f"{DEFAULT_GRID[0]}x{DEFAULT_GRID[1]}",
                        help="layout grid as HxW (default 16x16)")
    parser.add_argument("--provider", default=None,
                        help="'heuristic' or 'exec:<command>' "
                             "(default: $ASQL_PROVIDER or heuristic)")


def _cmd_parse(args) -> int:
    print(_load_graph(args.graph).to_json())
    return 0


def _cmd_plan(args) -> int:
    graph = _load_graph(args.graph)
    print(json.dumps(_resolve_plan(graph, args).to_document()))
    return 0


def _cmd_grid(args) -> int:
    graph = _load_graph(args.graph)
    assignment = build_assignment(_resolve_plan(graph, args), graph)
    print(render_ascii(assignment, verbose=args.verbose))
    if args.out:
        channels = np.stack([assignment.entity, assignment.subregion])
        write_tensor(channels.astype(np.int32), args.out)
    return 0


def _cmd_masks(args) -> int:
    graph = _load_graph(args.graph)
    assignment = build_assignment(_resolve_plan(graph, args), graph)
    dims = _parse_dims(args.res) if args.res \
        else (assignment.height, assignment.width)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for entity in sorted(graph.entities, key=lambda e: e.id):
        if args.per_subregion and entity.quantity >= 2:
            selections = [(sub, f"entity_{entity.id}_sub{sub}")
                          for sub in range(1, entity.quantity + 1)]
        else:
            selections = [(None, f"entity_{entity.id}")]
        for sub, stem in selections:
            mask = soft_mask(assignment, entity.id, sub, target_dims=dims)
            path = out_dir / f"{stem}.tnsr"
            write_tensor(mask.values.astype(np.float32), path)
            written.append(path.name)
            if args.pgm:
                _write_pgm(mask.values, out_dir / f"{stem}.pgm")
                written.append(f"{stem}.pgm")
    print(json.dumps({"out_dir": str(out_dir), "files": written}))
    return 0


def _cmd_loss(args) -> int:
    graph = _load_graph(args.graph)
    plan = _resolve_plan(graph, args)
    cross = read_tensor(args.cross).astype(np.float64)
    self_attn = None
    if getattr(args, "self"):
        self_attn = read_tensor(getattr(args, "self")).astype(np.float64)
    if args.res:
        dims = _parse_dims(args.res)
    elif self_attn is not None and self_attn.ndim == 3:
        dims = (int(self_attn.shape[1]), int(self_attn.shape[2]))
    else:
        dims = (plan.height, plan.width)
    ctx = build_context(graph, plan, attention_dims=dims)
    weights = _parse_weights(args)
    breakdown, d_cross, d_self = ctx.evaluate_arrays(
        cross, self_attn, weights, with_grad=bool(args.grad_dir))
    report = breakdown.as_dict()
    report["weights"] = weights.as_dict()
    print(json.dumps(report))
    if args.grad_dir:
        grad_dir = Path(args.grad_dir)
        grad_dir.mkdir(parents=True, exist_ok=True)
        write_tensor(d_cross.astype(np.float32), grad_dir / "d_cross.tnsr")
        if d_self is not None:
            write_tensor(d_self.astype(np.float32), grad_dir / "d_self.tnsr")
    return 0


def _cmd_optimize(args) -> int:
    graph = _load_graph(args.graph)
    plan = _resolve_plan(graph, args)
    config = OptimizeConfig(
        alpha=args.alpha, steps=args.steps, weights=_parse_weights(args),
        beta=args.beta, seed=args.seed, latent_dim=args.latent_dim,
        attention_dims=_parse_dims(args.res) if args.res else None,
        per_subregion=args.per_subregion, loss_threshold=args.threshold)
    trajectory = run(graph, plan, config)
    text = trajectory.to_jsonl()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asql",
        description="Scene-graph layout guidance: grids, masks, and "
                    "attention-space losses.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate a scene-graph document")
    p.add_argument("graph")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("plan", help="derive a guidance plan")
    p.add_argument("graph")
    _add_plan_flags(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("grid", help="render the cell assignment grid")
    p.add_argument("graph")
    _add_plan_flags(p)
    p.add_argument("--out", default=None, help="also write an int32 tensor "
                   "(2 channels: entity, subregion)")
    p.add_argument("--verbose", action="store_true",
                   help="render cells as id:sub")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("masks", help="write per-entity soft masks")
    p.add_argument("graph")
    _add_plan_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--res", default=None, help="mask resolution HxW "
                   "(default: grid size)")
    p.add_argument("--per-subregion", action="store_true")
    p.add_argument("--pgm", action="store_true",
                   help="also write PGM renderings")
    p.set_defaults(func=_cmd_masks)

    p = sub.add_parser("loss", help="evaluate losses on attention tensors")
    p.add_argument("--graph", required=True)
    _add_plan_flags(p)
    p.add_argument("--cross", required=True, help="cross-attention tensor "
                   "file, shape (H*W, tokens)")
    p.add_argument("--self", default=None, help="self-attention tensor "
                   "file, shape (H*W, H, W)")
    p.add_argument("--res", default=None, help="attention resolution HxW")
    p.add_argument("--weights", default=None,
                   help="four comma-separated lambdas (att,size,cross,self)")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--grad-dir", default=None,
                   help="write gradient tensors to this directory")
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("optimize", help="run the guidance optimization loop")
    p.add_argument("graph")
    _add_plan_flags(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--res", default=None, help="attention resolution HxW "
                   "(default: grid size)")
    p.add_argument("--weights", default=None,
                   help="four comma-separated lambdas (att,size,cross,self)")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--per-subregion", action="store_true")
    p.add_argument("--threshold", type=float, default=None,
                   help="stop when total loss falls to this value")
    p.add_argument("--out", default=None, help="trajectory JSONL file")
    p.set_defaults(func=_cmd_optimize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GuidanceError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "IOError", "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
