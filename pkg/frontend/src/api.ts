/** Thin typed client for the identification service. */

import type {
  EnvironmentDetail,
  EnvironmentListResponse,
  IdentifyResponse,
  LexiconResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly detail: unknown = null,
  ) {
    super(message);
  }
}

async function readJson(resp: Response): Promise<unknown> {
  try {
    return await resp.json();
  } catch {
    return null;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) {
      throw new ApiError(`GET ${path} failed (${resp.status})`, resp.status, await readJson(resp));
    }
    return (await resp.json()) as T;
  }

  lexicon(): Promise<LexiconResponse> {
    return this.get("/api/lexicon");
  }

  environments(): Promise<EnvironmentListResponse> {
    return this.get("/api/environments");
  }

  environment(id: string): Promise<EnvironmentDetail> {
    return this.get(`/api/environments/${encodeURIComponent(id)}`);
  }

  async identify(envId: string, symbols: string[]): Promise<IdentifyResponse> {
    const resp = await this.fetchFn(this.baseUrl + "/api/identify", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ env_id: envId, symbols }),
    });
    if (!resp.ok) {
      const detail = await readJson(resp);
      throw new ApiError(`identify failed (${resp.status})`, resp.status, detail);
    }
    return (await resp.json()) as IdentifyResponse;
  }
}
