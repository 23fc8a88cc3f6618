/** Canvas painting of a computed draw model. */

import type { DrawModel, DrawBlock } from "./scene.js";

const BACKGROUND = "#1c1e22";
const TOP_OUTLINE = "#ffd75e";
const OUTLINE = "#e8e8e8";

export function paint(ctx: CanvasRenderingContext2D, model: DrawModel): void {
  ctx.fillStyle = BACKGROUND;
  ctx.fillRect(0, 0, model.width, model.height);
  for (const block of model.blocks) {
    ctx.fillStyle = block.fill;
    ctx.fillRect(block.px, block.py, block.pw, block.ph);
    ctx.lineWidth = block.outlineWidth;
    ctx.strokeStyle = block.top ? TOP_OUTLINE : OUTLINE;
    ctx.strokeRect(block.px, block.py, block.pw, block.ph);
  }
}

export function blockAt(model: DrawModel, x: number, y: number): DrawBlock | null {
  // later blocks paint on top, so hit-test in reverse order
  for (let i = model.blocks.length - 1; i >= 0; i--) {
    const b = model.blocks[i];
    if (x >= b.px && x <= b.px + b.pw && y >= b.py && y <= b.py + b.ph) return b;
  }
  return null;
}
