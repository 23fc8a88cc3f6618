/** Console bootstrap: wires chips, scene canvas, and the session together. */

import { ApiClient } from "./api.js";
import { computeDrawModel, entropyFraction, formatProb, formatTotal } from "./scene.js";
import { blockAt, paint } from "./render.js";
import { Session, fromQuery, toQuery, type SessionState } from "./state.js";
import type { EnvironmentDetail, SceneBlock } from "./types.js";

const CANVAS_SIZE = 520;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const envSelect = el<HTMLSelectElement>("env-select");
  const chipBar = el<HTMLDivElement>("chips");
  const freeText = el<HTMLInputElement>("free-text");
  const canvas = el<HTMLCanvasElement>("scene");
  const banner = el<HTMLDivElement>("banner");
  const entropyFill = el<HTMLDivElement>("entropy-fill");
  const entropyLabel = el<HTMLSpanElement>("entropy-label");
  const totalLabel = el<HTMLSpanElement>("total-label");
  const hoverLabel = el<HTMLDivElement>("hover-label");

  canvas.width = CANVAS_SIZE;
  canvas.height = CANVAS_SIZE;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");

  const [lexicon, envList] = await Promise.all([api.lexicon(), api.environments()]);

  let detail: EnvironmentDetail | null = null;
  let scene: SceneBlock[] = [];
  let lastState: SessionState | null = null;

  const chipButtons = new Map<string, HTMLButtonElement>();
  for (const sym of lexicon.symbols) {
    const btn = document.createElement("button");
    btn.type = "button";
    btn.className = "chip";
    btn.textContent = sym.name;
    btn.addEventListener("click", () => session.toggleChip(sym.name));
    chipBar.appendChild(btn);
    chipButtons.set(sym.name, btn);
  }

  for (const env of envList.environments) {
    const option = document.createElement("option");
    option.value = env.id;
    option.textContent = `${env.id} (${env.category}, ${env.object_count} objects)`;
    envSelect.appendChild(option);
  }

  function redraw(state: SessionState): void {
    lastState = state;
    for (const [name, btn] of chipButtons) {
      btn.classList.toggle("active", state.chips.has(name));
    }
    if (state.error) {
      banner.textContent = state.error;
      banner.classList.remove("hidden");
    } else {
      banner.classList.add("hidden");
    }
    if (scene.length === 0) return;
    try {
      const model = computeDrawModel(scene, state.posterior, CANVAS_SIZE, CANVAS_SIZE);
      paint(ctx!, model);
    } catch (err) {
      banner.textContent = err instanceof Error ? err.message : String(err);
      banner.classList.remove("hidden");
      return;
    }
    if (state.posterior) {
      const n = scene.length;
      const fraction = state.entropy === null ? 1 : entropyFraction(state.entropy, n);
      entropyFill.style.width = `${Math.round(fraction * 100)}%`;
      entropyLabel.textContent =
        state.entropy === null ? "" : `${state.entropy.toFixed(3)} nats`;
      totalLabel.textContent = `Σ p = ${formatTotal(state.posterior)}`;
    }
    if (state.envId) {
      history.replaceState(null, "", toQuery(state.envId, state.chips) || location.pathname);
    }
  }

  const session = new Session(api, { onChange: redraw });

  envSelect.addEventListener("change", async () => {
    detail = await api.environment(envSelect.value);
    scene = detail.scene ?? [];
    session.setEnvironment(detail.id);
  });

  // free-text path: same identify pipeline as the chips, so an unknown
  // token surfaces the service's 422 banner rather than local validation
  freeText.addEventListener("keydown", (event) => {
    if (event.key !== "Enter") return;
    const tokens = freeText.value.trim().split(/\s+/).filter((t) => t.length > 0);
    session.setChips(tokens.map((t) => t.toLowerCase()));
    freeText.value = "";
  });

  canvas.addEventListener("mousemove", (event) => {
    if (!lastState || scene.length === 0) return;
    const rect = canvas.getBoundingClientRect();
    const model = computeDrawModel(scene, lastState.posterior, CANVAS_SIZE, CANVAS_SIZE);
    const hit = blockAt(model, event.clientX - rect.left, event.clientY - rect.top);
    if (hit && hit.prob !== null) {
      hoverLabel.textContent = `${hit.objectId}: ${formatProb(hit.prob)}`;
    } else if (hit) {
      hoverLabel.textContent = hit.objectId;
    } else {
      hoverLabel.textContent = "";
    }
  });

  // deep link: restore (environment, chips) from the query string
  const initial = fromQuery(location.search);
  const startEnv =
    initial.envId && envList.environments.some((e) => e.id === initial.envId)
      ? initial.envId
      : envList.environments[0]?.id;
  if (startEnv) {
    envSelect.value = startEnv;
    detail = await api.environment(startEnv);
    scene = detail.scene ?? [];
    session.setEnvironment(startEnv, false);
    if (initial.chips.length > 0 && initial.envId === startEnv) {
      session.setChips(initial.chips.filter((c) => chipButtons.has(c)));
    }
  }
}

boot().catch((err) => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.textContent = `failed to start: ${err instanceof Error ? err.message : err}`;
    banner.classList.remove("hidden");
  }
});
