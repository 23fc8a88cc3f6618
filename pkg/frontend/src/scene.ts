/** Pure scene-to-pixels layout: blocks shaded by posterior mass.
 *
 * Probabilities are carried through verbatim from the service response;
 * only the brightness mapping is local. A posterior that does not align
 * one-to-one with the scene's objects raises instead of drawing partially.
 */

import type { PosteriorEntry, SceneBlock } from "./types.js";

export interface DrawBlock {
  objectId: string;
  px: number;
  py: number;
  pw: number;
  ph: number;
  fill: string;
  outlineWidth: number;
  prob: number | null;
  top: boolean;
  label: string;
}

export interface DrawModel {
  blocks: DrawBlock[];
  width: number;
  height: number;
}

const DIM_FLOOR = 0.25;

function rgb(color: [number, number, number], scale: number): string {
  const [r, g, b] = color.map((v) => Math.max(0, Math.min(255, Math.round(v * scale))));
  return `rgb(${r}, ${g}, ${b})`;
}

export function computeDrawModel(
  scene: SceneBlock[],
  posterior: PosteriorEntry[] | null,
  width: number,
  height: number,
): DrawModel {
  let probs: Map<string, number> | null = null;
  let maxProb = 0;
  if (posterior !== null) {
    if (posterior.length !== scene.length) {
      throw new Error(
        `posterior has ${posterior.length} entries for ${scene.length} scene objects`,
      );
    }
    probs = new Map(posterior.map((e) => [e.object_id, e.prob]));
    for (const block of scene) {
      if (!probs.has(block.object_id)) {
        throw new Error(`posterior is missing object ${block.object_id}`);
      }
    }
    maxProb = Math.max(...posterior.map((e) => e.prob));
  }

  const blocks = scene.map((block) => {
    const prob = probs === null ? null : probs.get(block.object_id)!;
    const weight = prob === null || maxProb === 0 ? 1 : prob / maxProb;
    const scale = prob === null ? 1 : DIM_FLOOR + (1 - DIM_FLOOR) * weight;
    return {
      objectId: block.object_id,
      px: block.x * width,
      py: block.y * height,
      pw: block.w * width,
      ph: block.h * height,
      fill: rgb(block.color, scale),
      outlineWidth: prob === null ? 1 : 1 + 3 * weight,
      prob,
      top: prob !== null && prob === maxProb,
      label: prob === null ? block.object_id : `${block.object_id} ${formatProb(prob)}`,
    };
  });
  return { blocks, width, height };
}

export function formatProb(prob: number): string {
  return prob.toFixed(3);
}

/** Displayed total of the service's probabilities; 1.00 up to rounding. */
export function formatTotal(posterior: PosteriorEntry[]): string {
  const total = posterior.reduce((acc, e) => acc + e.prob, 0);
  return total.toFixed(2);
}

/** Residual-ambiguity meter: entropy as a share of the uniform maximum. */
export function entropyFraction(entropy: number, objectCount: number): number {
  if (objectCount <= 1) return 0;
  return Math.min(1, Math.max(0, entropy / Math.log(objectCount)));
}
