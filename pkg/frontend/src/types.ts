/** Wire types of the identification service's JSON API. */

export interface LexiconSymbol {
  name: string;
  index: number;
  channels: string[];
}

export interface LexiconResponse {
  symbols: LexiconSymbol[];
}

export interface EnvironmentSummary {
  id: string;
  category: string;
  object_count: number;
}

export interface EnvironmentListResponse {
  environments: EnvironmentSummary[];
}

export interface SceneBlock {
  object_id: string;
  x: number;
  y: number;
  w: number;
  h: number;
  color: [number, number, number];
}

export interface EnvironmentDetail {
  id: string;
  category: string;
  objects: string[];
  scene: SceneBlock[] | null;
}

export interface PosteriorEntry {
  object_id: string;
  prob: number;
}

export interface IdentifyResponse {
  env_id: string;
  posterior: PosteriorEntry[];
  entropy: number;
}
