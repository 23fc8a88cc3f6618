/** Session state: environment, description chips, and the live posterior.
 *
 * Chip toggles are debounced; every request carries a sequence number and
 * responses from superseded requests are discarded, so the rendered
 * posterior always reflects the latest chip set. Posterior values are
 * stored exactly as the service returned them.
 */

import { ApiClient, ApiError } from "./api.js";
import type { IdentifyResponse, PosteriorEntry } from "./types.js";

export interface SessionState {
  envId: string | null;
  chips: ReadonlySet<string>;
  posterior: PosteriorEntry[] | null;
  entropy: number | null;
  pending: boolean;
  error: string | null;
}

export interface SessionOptions {
  debounceMs?: number;
  onChange?: (state: SessionState) => void;
}

const DEFAULT_DEBOUNCE_MS = 150;

function unknownToken(err: unknown): string | null {
  if (err instanceof ApiError && err.status === 422) {
    const detail = err.detail as { detail?: { token?: string } } | null;
    return detail?.detail?.token ?? null;
  }
  return null;
}

function describeError(err: unknown): string {
  const token = unknownToken(err);
  if (token !== null) return `unknown symbol: ${token}`;
  if (err instanceof ApiError) return err.message;
  return err instanceof Error ? `request failed: ${err.message}` : "request failed";
}

export class Session {
  private envId: string | null = null;
  private chips = new Set<string>();
  private posterior: PosteriorEntry[] | null = null;
  private entropy: number | null = null;
  private pending = false;
  private error: string | null = null;

  private seq = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private readonly debounceMs: number;
  private readonly onChange: (state: SessionState) => void;

  constructor(
    private readonly api: ApiClient,
    options: SessionOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? DEFAULT_DEBOUNCE_MS;
    this.onChange = options.onChange ?? (() => undefined);
  }

  state(): SessionState {
    return {
      envId: this.envId,
      chips: new Set(this.chips),
      posterior: this.posterior,
      entropy: this.entropy,
      pending: this.pending,
      error: this.error,
    };
  }

  /** Switch scenes; chips reset unless asked to survive (deep links). */
  setEnvironment(envId: string, keepChips = false): void {
    this.envId = envId;
    if (!keepChips) this.chips.clear();
    this.posterior = null;
    this.entropy = null;
    this.request(); // immediate: a new scene needs its posterior now
  }

  toggleChip(symbol: string): void {
    if (this.envId === null) return;
    if (this.chips.has(symbol)) {
      this.chips.delete(symbol);
    } else {
      this.chips.add(symbol);
    }
    this.scheduleRequest();
  }

  setChips(symbols: Iterable<string>): void {
    this.chips = new Set(symbols);
    this.scheduleRequest();
  }

  chipList(): string[] {
    return [...this.chips].sort();
  }

  destroy(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.seq += 1; // invalidate anything in flight
  }

  private scheduleRequest(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.request();
    }, this.debounceMs);
    this.notify();
  }

  private request(): void {
    if (this.envId === null) return;
    const thisSeq = ++this.seq;
    this.pending = true;
    this.notify();
    this.api.identify(this.envId, this.chipList()).then(
      (resp: IdentifyResponse) => {
        if (thisSeq !== this.seq) return; // superseded: drop stale posterior
        this.posterior = resp.posterior;
        this.entropy = resp.entropy;
        this.pending = false;
        this.error = null;
        this.notify();
      },
      (err: unknown) => {
        if (thisSeq !== this.seq) return;
        this.pending = false;
        this.error = describeError(err);
        // chips stay within the lexicon: evict a token the service refused
        const token = unknownToken(err);
        if (token !== null) this.chips.delete(token);
        this.notify();
      },
    );
  }

  private notify(): void {
    this.onChange(this.state());
  }
}

/** Serialize (environment, chips) for deep links. */
export function toQuery(envId: string | null, chips: Iterable<string>): string {
  const params = new URLSearchParams();
  if (envId !== null) params.set("env", envId);
  const d = [...chips].sort().join(" ");
  if (d) params.set("d", d);
  const text = params.toString();
  return text ? `?${text}` : "";
}

export function fromQuery(search: string): { envId: string | null; chips: string[] } {
  const params = new URLSearchParams(search);
  const envId = params.get("env");
  const d = params.get("d") ?? "";
  const chips = d.split(" ").filter((t) => t.length > 0);
  return { envId, chips };
}
