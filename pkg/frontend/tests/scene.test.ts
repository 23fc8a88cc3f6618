import { describe, expect, it } from "vitest";

import { computeDrawModel, entropyFraction, formatTotal } from "../src/scene.js";
import type { PosteriorEntry, SceneBlock } from "../src/types.js";

function scene(n: number): SceneBlock[] {
  return Array.from({ length: n }, (_, i) => ({
    object_id: `o${i + 1}`,
    x: 0.05 + 0.18 * i,
    y: 0.4,
    w: 0.12,
    h: 0.18,
    color: [40, 160, 220] as [number, number, number],
  }));
}

function uniform(n: number): PosteriorEntry[] {
  return Array.from({ length: n }, (_, i) => ({ object_id: `o${i + 1}`, prob: 1 / n }));
}

describe("computeDrawModel", () => {
  it("uniform posterior draws all blocks at equal brightness", () => {
    const model = computeDrawModel(scene(4), uniform(4), 200, 200);
    const fills = new Set(model.blocks.map((b) => b.fill));
    expect(fills.size).toBe(1);
    expect(model.blocks.every((b) => b.top)).toBe(true);
  });

  it("a dominant probability produces a single highlight", () => {
    const posterior: PosteriorEntry[] = [
      { object_id: "o1", prob: 0.985 },
      { object_id: "o2", prob: 0.005 },
      { object_id: "o3", prob: 0.005 },
      { object_id: "o4", prob: 0.005 },
    ];
    const model = computeDrawModel(scene(4), posterior, 200, 200);
    const tops = model.blocks.filter((b) => b.top);
    expect(tops).toHaveLength(1);
    expect(tops[0].objectId).toBe("o1");
    const dull = model.blocks.find((b) => b.objectId === "o2")!;
    expect(dull.fill).not.toBe(tops[0].fill);
  });

  it("no posterior renders the plain scene", () => {
    const model = computeDrawModel(scene(3), null, 300, 150);
    expect(model.blocks.every((b) => b.prob === null)).toBe(true);
    expect(model.blocks[1].px).toBeCloseTo(0.23 * 300, 12);
    expect(model.blocks[1].ph).toBeCloseTo(0.18 * 150, 12);
  });

  it("probabilities pass through exactly", () => {
    const probs = [0.123456789, 0.3, 0.576543211];
    const posterior = probs.map((prob, i) => ({ object_id: `o${i + 1}`, prob }));
    const model = computeDrawModel(scene(3), posterior, 100, 100);
    for (let i = 0; i < 3; i++) {
      expect(model.blocks[i].prob).toBe(probs[i]);
    }
  });

  it("mismatched lengths refuse to draw", () => {
    expect(() => computeDrawModel(scene(4), uniform(3), 100, 100)).toThrow(/entries/);
  });

  it("missing object ids refuse to draw", () => {
    const wrong = uniform(4).map((e, i) => ({ ...e, object_id: `x${i}` }));
    expect(() => computeDrawModel(scene(4), wrong, 100, 100)).toThrow(/missing/);
  });
});

describe("meters", () => {
  it("displayed total is 1.00 up to rounding", () => {
    expect(formatTotal(uniform(3))).toBe("1.00");
    expect(formatTotal(uniform(7))).toBe("1.00");
  });

  it("entropy fraction spans 0..1", () => {
    expect(entropyFraction(Math.log(4), 4)).toBeCloseTo(1, 12);
    expect(entropyFraction(0, 4)).toBe(0);
    expect(entropyFraction(5, 1)).toBe(0);
  });
});
