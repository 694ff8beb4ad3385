/**
 * Client bindings for the asql layout-guidance engine.
 *
 * The engine is consumed strictly through its stable external surface:
 * the `asql` command-line interface and the binary tensor file format.
 * `buildPlan` materializes a validated guidance plan plus its soft masks
 * at a fixed resolution; `evalLosses` evaluates the guidance losses (and
 * optionally their gradients) on caller-provided attention buffers.
 *
 * A {@link BoundPlan} is deeply frozen plain data, so it can be shared
 * freely across worker threads; `evalLosses` is reentrant — every call
 * runs in its own temporary directory and subprocess.
 */
import { mkdtempSync, mkdirSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { runCli, type CliOptions } from "./cli.js";
import { ShapeError, ValidationError } from "./errors.js";
import {
  readTensorFile,
  tensor,
  writeTensorFile,
  type Tensor,
} from "./tensorfile.js";

export * from "./errors.js";
export * from "./tensorfile.js";
export { runCli, type CliOptions } from "./cli.js";

/** A grid or attention-map size. */
export interface GridDims {
  readonly height: number;
  readonly width: number;
}

/** One directional constraint of a plan document. */
export interface PlanConstraint {
  readonly i: number;
  readonly j: number;
  readonly vertical: string;
  readonly horizontal: string;
}

/** The plan document as emitted by `asql plan`. */
export interface PlanDocument {
  readonly size_order: readonly number[];
  readonly seed_grid: ReadonlyArray<readonly number[]>;
  readonly constraints: readonly PlanConstraint[];
  readonly grid: GridDims;
}

/** One prebuilt soft mask (sub-region 0 means the whole entity). */
export interface BoundMask {
  readonly entityId: number;
  readonly subregion: number;
  readonly file: string;
  readonly values: Tensor;
}

/** An immutable validated plan plus its masks at a fixed resolution. */
export interface BoundPlan {
  /** Normalized scene document (JSON text, as echoed by `asql parse`). */
  readonly graphJson: string;
  readonly plan: PlanDocument;
  readonly grid: GridDims;
  /** Mask/attention resolution fixed at build time. */
  readonly resolution: GridDims;
  readonly masks: readonly BoundMask[];
}

/** Options for {@link buildPlan}. */
export interface BuildPlanOptions extends CliOptions {
  /** `"heuristic"` (default) or `"exec:<command>"`. */
  readonly provider?: string;
  /** Mask resolution; defaults to the layout grid size. */
  readonly resolution?: GridDims;
  /** Also build one mask per sub-region for quantity >= 2 entities. */
  readonly perSubregion?: boolean;
}

/** Loss weights; omitted fields default to 1. */
export interface LossWeights {
  readonly att?: number;
  readonly size?: number;
  readonly locCross?: number;
  readonly locSelf?: number;
  readonly eta?: number;
}

/** Explicit entity/attribute -> token column assignments. */
export interface TokenMap {
  readonly entity: Readonly<Record<number, number>>;
  readonly attributes?: Readonly<Record<number, readonly number[]>>;
}

/** Input buffers and knobs for {@link evalLosses}. */
export interface EvalLossesInput extends CliOptions {
  /** Cross-attention, row-major (height*width, tokens), float32. */
  readonly cross: Float32Array;
  readonly tokens: number;
  /** Self-attention, row-major (height*width, height, width), float32. */
  readonly selfAttn?: Float32Array;
  readonly tokenMap?: TokenMap;
  readonly weights?: LossWeights;
  /** Also compute gradient tensors w.r.t. the input buffers. */
  readonly withGrad?: boolean;
}

/** The four loss terms and their weighted total. */
export interface LossBreakdown {
  readonly att: number;
  readonly size: number;
  readonly locCross: number;
  readonly locSelf: number;
  readonly total: number;
}

/** Result of one loss evaluation. */
export interface EvalLossesResult {
  readonly breakdown: LossBreakdown;
  /** The effective weights, echoed by the engine. */
  readonly weights: Readonly<Record<string, number>>;
  /** Gradient of the total w.r.t. `cross`; present iff `withGrad`. */
  readonly dCross?: Tensor;
  /** Gradient w.r.t. `selfAttn`; present iff `withGrad` and provided. */
  readonly dSelf?: Tensor;
}

const MASK_FILE = /^entity_(\d+)(?:_sub(\d+))?\.tnsr$/;

function dimsArg(dims: GridDims): string {
  return `${dims.height}x${dims.width}`;
}

function withTempDir<T>(body: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "asql-client-"));
  try {
    return body(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function deepFreeze<T>(value: T): T {
  if (value !== null && typeof value === "object" && !ArrayBuffer.isView(value)) {
    for (const key of Object.getOwnPropertyNames(value)) {
      deepFreeze((value as Record<string, unknown>)[key]);
    }
    Object.freeze(value);
  }
  return value;
}

/**
 * Build a validated guidance plan and its soft masks.
 *
 * Equivalent to `asql plan` followed by `asql masks` on the same
 * document; all engine-side failures surface as the mapped error
 * classes (DocumentSyntaxError, CycleError, StarvationError, ...).
 */
export function buildPlan(
  graphJson: string,
  height: number,
  width: number,
  options: BuildPlanOptions = {},
): BoundPlan {
  const grid: GridDims = { height, width };
  const resolution = options.resolution ?? grid;
  return withTempDir((dir) => {
    const graphPath = join(dir, "graph.json");
    writeFileSync(graphPath, graphJson, "utf8");
    const providerArgs = options.provider
      ? ["--provider", options.provider]
      : [];

    const normalized = runCli(["parse", graphPath], options).trim();
    const planOut = runCli(
      ["plan", graphPath, "--grid", dimsArg(grid), ...providerArgs],
      options,
    );
    const plan = JSON.parse(planOut) as PlanDocument;

    const masksDir = join(dir, "masks");
    const masksOut = runCli(
      [
        "masks", graphPath,
        "--grid", dimsArg(grid),
        ...providerArgs,
        "--out-dir", masksDir,
        "--res", dimsArg(resolution),
        ...(options.perSubregion ? ["--per-subregion"] : []),
      ],
      options,
    );
    const manifest = JSON.parse(masksOut) as { files: string[] };
    const masks: BoundMask[] = manifest.files
      .filter((name) => name.endsWith(".tnsr"))
      .map((name) => {
        const match = MASK_FILE.exec(name);
        if (!match) {
          throw new ValidationError(`unexpected mask file name ${name}`);
        }
        return {
          entityId: Number(match[1]),
          subregion: match[2] ? Number(match[2]) : 0,
          file: name,
          values: readTensorFile(join(masksDir, name)),
        };
      });

    return deepFreeze<BoundPlan>({
      graphJson: normalized,
      plan,
      grid,
      resolution,
      masks,
    });
  });
}

interface SceneEntityDoc {
  id: number;
  token_index?: number;
  attribute_token_indices?: number[];
  [key: string]: unknown;
}

function graphWithTokenMap(graphJson: string, tokenMap?: TokenMap): string {
  if (!tokenMap) {
    return graphJson;
  }
  const doc = JSON.parse(graphJson) as { entities: SceneEntityDoc[] };
  for (const entity of doc.entities) {
    const tokenIndex = tokenMap.entity[entity.id];
    if (tokenIndex === undefined) {
      throw new ValidationError(
        `token map is missing entity ${entity.id}`);
    }
    entity.token_index = tokenIndex;
    const attrs = tokenMap.attributes?.[entity.id];
    if (attrs !== undefined) {
      entity.attribute_token_indices = [...attrs];
    }
  }
  return JSON.stringify(doc);
}

function weightsArgs(weights?: LossWeights): string[] {
  if (!weights) {
    return [];
  }
  const args: string[] = [];
  if (
    weights.att !== undefined || weights.size !== undefined ||
    weights.locCross !== undefined || weights.locSelf !== undefined
  ) {
    const lams = [
      weights.att ?? 1.0,
      weights.size ?? 1.0,
      weights.locCross ?? 1.0,
      weights.locSelf ?? 1.0,
    ];
    args.push("--weights", lams.join(","));
  }
  if (weights.eta !== undefined) {
    args.push("--eta", String(weights.eta));
  }
  return args;
}

/**
 * Evaluate the guidance losses (and optionally gradients) on attention
 * buffers against a bound plan.
 *
 * The plan itself — not a re-derived one — is what evaluates: it is fed
 * back to the engine through the provider protocol, re-validated, and
 * used as-is. Buffers are written as tensor-format views without
 * element copies; results are read back from the engine's report and
 * gradient tensors.
 */
export function evalLosses(
  plan: BoundPlan,
  input: EvalLossesInput,
): EvalLossesResult {
  if (!(input.cross instanceof Float32Array)) {
    throw new ShapeError("cross must be a Float32Array");
  }
  if (!Number.isInteger(input.tokens) || input.tokens < 1) {
    throw new ShapeError(`tokens must be a positive integer, got ${input.tokens}`);
  }
  const { height, width } = plan.resolution;
  const rows = height * width;
  if (input.cross.length !== rows * input.tokens) {
    throw new ShapeError(
      `cross has ${input.cross.length} elements, expected ` +
      `${rows} x ${input.tokens} = ${rows * input.tokens}`);
  }
  if (input.selfAttn !== undefined) {
    if (!(input.selfAttn instanceof Float32Array)) {
      throw new ShapeError("selfAttn must be a Float32Array");
    }
    if (input.selfAttn.length !== rows * rows) {
      throw new ShapeError(
        `selfAttn has ${input.selfAttn.length} elements, expected ` +
        `${rows} x ${height} x ${width} = ${rows * rows}`);
    }
  }

  return withTempDir((dir) => {
    const graphPath = join(dir, "graph.json");
    writeFileSync(
      graphPath, graphWithTokenMap(plan.graphJson, input.tokenMap), "utf8");

    // Echo provider: hands the bound plan document back to the engine,
    // which re-validates it against the scene before evaluating.
    const providerPath = join(dir, "provider.mjs");
    writeFileSync(
      providerPath,
      "const plan = " + JSON.stringify(plan.plan) + ";\n" +
      "process.stdin.resume();\n" +
      "process.stdin.on(\"end\", () => {\n" +
      "  process.stdout.write(JSON.stringify(plan));\n" +
      "});\n",
      "utf8",
    );

    const crossPath = join(dir, "cross.tnsr");
    writeTensorFile(crossPath, tensor(input.cross, [rows, input.tokens]));
    const selfArgs: string[] = [];
    if (input.selfAttn !== undefined) {
      const selfPath = join(dir, "self.tnsr");
      writeTensorFile(
        selfPath, tensor(input.selfAttn, [rows, height, width]));
      selfArgs.push("--self", selfPath);
    }

    const gradDir = join(dir, "grads");
    if (input.withGrad) {
      mkdirSync(gradDir);
    }

    const report = JSON.parse(runCli(
      [
        "loss",
        "--graph", graphPath,
        "--grid", dimsArg(plan.grid),
        "--provider", `exec:node ${providerPath}`,
        "--cross", crossPath,
        ...selfArgs,
        "--res", dimsArg(plan.resolution),
        ...weightsArgs(input.weights),
        ...(input.withGrad ? ["--grad-dir", gradDir] : []),
      ],
      input,
    )) as {
      att: number;
      size: number;
      loc_cross: number;
      loc_self: number;
      total: number;
      weights: Record<string, number>;
    };

    const result: {
      breakdown: LossBreakdown;
      weights: Record<string, number>;
      dCross?: Tensor;
      dSelf?: Tensor;
    } = {
      breakdown: {
        att: report.att,
        size: report.size,
        locCross: report.loc_cross,
        locSelf: report.loc_self,
        total: report.total,
      },
      weights: report.weights,
    };
    if (input.withGrad) {
      result.dCross = readTensorFile(join(gradDir, "d_cross.tnsr"));
      if (input.selfAttn !== undefined) {
        result.dSelf = readTensorFile(join(gradDir, "d_self.tnsr"));
      }
    }
    return result;
  });
}
