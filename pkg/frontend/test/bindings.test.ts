import { describe, expect, it } from "vitest";

import {
  CycleError,
  DocumentSyntaxError,
  QuantityError,
  ShapeError,
  TransportError,
  ValidationError,
  buildPlan,
  evalLosses,
  type BoundPlan,
} from "../src/index.js";
import { randomAttention } from "./util.js";

const SIMPLE = JSON.stringify({
  caption: "a cat to the left of a dog",
  entities: [{ id: 1, name: "cat" }, { id: 2, name: "dog" }],
  relations: [{ subject: 1, predicate: "left of", object: 2 }],
});

const ONE_ATTR = JSON.stringify({
  caption: "a black cat",
  entities: [{ id: 1, name: "cat", attributes: ["black"] }],
  relations: [],
});

describe("buildPlan", () => {
  it("binds a plan with per-entity masks at the grid resolution", () => {
    const plan = buildPlan(SIMPLE, 16, 16);
    expect(plan.grid).toEqual({ height: 16, width: 16 });
    expect(plan.resolution).toEqual({ height: 16, width: 16 });
    expect(plan.plan.size_order).toEqual([1, 2]);
    expect(plan.plan.grid).toEqual({ height: 16, width: 16 });
    expect(plan.plan.seed_grid).toHaveLength(16);
    expect(plan.masks.map((m) => [m.entityId, m.subregion]))
      .toEqual([[1, 0], [2, 0]]);
    for (const mask of plan.masks) {
      expect(mask.values.dtype).toBe("f32");
      expect(mask.values.shape).toEqual([16, 16]);
      const peak = Math.max(...mask.values.data);
      expect(peak).toBe(1);
    }
    const parsed = JSON.parse(plan.graphJson) as { caption: string };
    expect(parsed.caption).toBe("a cat to the left of a dog");
  });

  it("is deeply frozen and safe to share", () => {
    const plan = buildPlan(SIMPLE, 4, 4);
    expect(Object.isFrozen(plan)).toBe(true);
    expect(Object.isFrozen(plan.plan)).toBe(true);
    expect(Object.isFrozen(plan.masks)).toBe(true);
    expect(Object.isFrozen(plan.masks[0])).toBe(true);
    expect(Object.isFrozen(plan.plan.size_order)).toBe(true);
    expect(() => {
      (plan as { grid: unknown }).grid = null;
    }).toThrow(TypeError);
  });

  it("honors a mask resolution different from the grid", () => {
    const plan = buildPlan(SIMPLE, 4, 4, {
      resolution: { height: 16, width: 16 },
    });
    expect(plan.plan.grid).toEqual({ height: 4, width: 4 });
    expect(plan.masks[0]!.values.shape).toEqual([16, 16]);
  });

  it("builds sub-region masks when asked", () => {
    const doc = JSON.stringify({
      caption: "three birds",
      entities: [{ id: 1, name: "bird", quantity: 3 }],
      relations: [],
    });
    const plan = buildPlan(doc, 6, 6, { perSubregion: true });
    expect(plan.masks.map((m) => [m.entityId, m.subregion]))
      .toEqual([[1, 1], [1, 2], [1, 3]]);
  });

  it("maps engine failures onto the matching error classes", () => {
    expect(() => buildPlan("{not json", 4, 4)).toThrow(DocumentSyntaxError);

    const cyclic = JSON.stringify({
      caption: "impossible",
      entities: [{ id: 1, name: "a" }, { id: 2, name: "b" }],
      relations: [
        { subject: 1, predicate: "above", object: 2 },
        { subject: 2, predicate: "above", object: 1 },
      ],
    });
    expect(() => buildPlan(cyclic, 4, 4)).toThrow(CycleError);

    const crowded = JSON.stringify({
      caption: "four marbles in a tiny box",
      entities: [{ id: 1, name: "marble", quantity: 4 }],
      relations: [],
    });
    expect(() => buildPlan(crowded, 1, 3)).toThrow(QuantityError);

    expect(() => buildPlan(SIMPLE, 4, 4, { provider: "bogus" }))
      .toThrow(ValidationError);
  });

  it("raises TransportError when the CLI cannot be launched", () => {
    expect(() => buildPlan(SIMPLE, 4, 4, { bin: ["/nonexistent/asql"] }))
      .toThrow(TransportError);
  });
});

function maskCross(plan: BoundPlan): Float32Array {
  const rows = plan.resolution.height * plan.resolution.width;
  const cross = new Float32Array(rows * plan.masks.length);
  plan.masks.forEach((mask, column) => {
    for (let row = 0; row < rows; row += 1) {
      cross[row * plan.masks.length + column] = mask.values.data[row]!;
    }
  });
  return cross;
}

describe("evalLosses", () => {
  it("reports ~zero loc_cross when attention equals the masks", () => {
    const plan = buildPlan(SIMPLE, 4, 4);
    const { breakdown } = evalLosses(plan, {
      cross: maskCross(plan),
      tokens: 2,
    });
    expect(breakdown.locCross).toBeLessThan(1e-6);
    expect(breakdown.locSelf).toBe(0);
  });

  it("reproduces the all-0.5 attribute loss value", () => {
    const plan = buildPlan(ONE_ATTR, 4, 4);
    const cross = new Float32Array(16 * 2).fill(0.5);
    const { breakdown } = evalLosses(plan, {
      cross,
      tokens: 2,
      weights: { eta: 1.0 },
    });
    expect(Math.abs(breakdown.att - (Math.LN2 + 0.25))).toBeLessThan(1e-12);
  });

  it("returns zero total and zero gradients under zero weights", () => {
    const plan = buildPlan(SIMPLE, 4, 4);
    const rows = 16;
    const result = evalLosses(plan, {
      cross: randomAttention(rows * 2, 7),
      tokens: 2,
      selfAttn: randomAttention(rows * rows, 8),
      weights: { att: 0, size: 0, locCross: 0, locSelf: 0 },
      withGrad: true,
    });
    expect(result.breakdown.total).toBe(0);
    expect(result.dCross!.shape).toEqual([rows, 2]);
    expect(result.dSelf!.shape).toEqual([rows, 4, 4]);
    expect(Math.max(...result.dCross!.data.map(Math.abs))).toBe(0);
    expect(Math.max(...result.dSelf!.data.map(Math.abs))).toBe(0);
    expect(result.breakdown.locCross).toBeGreaterThan(0); // raw terms survive
  });

  it("validates buffer shapes and dtypes before spawning anything", () => {
    const plan = buildPlan(SIMPLE, 4, 4);
    expect(() => evalLosses(plan, {
      cross: new Float32Array(5),
      tokens: 2,
    })).toThrow(ShapeError);
    expect(() => evalLosses(plan, {
      cross: new Float64Array(32) as unknown as Float32Array,
      tokens: 2,
    })).toThrow(ShapeError);
    expect(() => evalLosses(plan, {
      cross: new Float32Array(32),
      tokens: 0,
    })).toThrow(ShapeError);
    expect(() => evalLosses(plan, {
      cross: new Float32Array(32),
      tokens: 2,
      selfAttn: new Float32Array(10),
    })).toThrow(ShapeError);
  });

  it("propagates engine-side shape errors", () => {
    const plan = buildPlan(SIMPLE, 4, 4);
    // One column is client-consistent but below the scene's token count.
    expect(() => evalLosses(plan, {
      cross: randomAttention(16, 9),
      tokens: 1,
    })).toThrow(ShapeError);
  });

  it("applies an explicit token map", () => {
    const plan = buildPlan(SIMPLE, 4, 4);
    const cross = randomAttention(16 * 2, 10);
    const swapped = new Float32Array(cross.length);
    for (let row = 0; row < 16; row += 1) {
      swapped[row * 2] = cross[row * 2 + 1]!;
      swapped[row * 2 + 1] = cross[row * 2]!;
    }
    const direct = evalLosses(plan, { cross, tokens: 2 });
    const mapped = evalLosses(plan, {
      cross: swapped,
      tokens: 2,
      tokenMap: { entity: { 1: 1, 2: 0 } },
    });
    expect(mapped.breakdown).toEqual(direct.breakdown);

    expect(() => evalLosses(plan, {
      cross,
      tokens: 2,
      tokenMap: { entity: { 1: 0 } },
    })).toThrow(ValidationError);
  });

  it("is reentrant: repeated calls on a shared plan agree exactly", () => {
    const plan = buildPlan(SIMPLE, 4, 4);
    const cross = randomAttention(16 * 2, 11);
    const selfAttn = randomAttention(16 * 16, 12);
    const a = evalLosses(plan, { cross, tokens: 2, selfAttn, withGrad: true });
    const b = evalLosses(plan, { cross, tokens: 2, selfAttn, withGrad: true });
    expect(a.breakdown).toEqual(b.breakdown);
    expect(Buffer.from(a.dCross!.data.buffer))
      .toEqual(Buffer.from(b.dCross!.data.buffer));
    expect(Buffer.from(a.dSelf!.data.buffer))
      .toEqual(Buffer.from(b.dSelf!.data.buffer));
  });
});
