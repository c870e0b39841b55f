/** Typed client for the catalog service JSON API.
 *
 * Every method returns the parsed body on 2xx and throws {@link ApiError}
 * otherwise, so callers can branch on `status` (409 rescore-in-flight,
 * 422 invalid class set, 404 unknown song) and read the structured body.
 */

export interface BackendInfo {
  name: string;
  version: string;
  dim: number;
}

export interface SongSummary {
  song_id: string;
  name: string;
  path: string;
  duration: number;
  segment_count: number;
}

export interface SkippedSong {
  path: string;
  reason: string;
}

export interface SongsResponse {
  revision: number;
  backend: BackendInfo;
  songs: SongSummary[];
  skipped: SkippedSong[];
}

export interface SegmentInfo {
  index: number;
  start: number;
  end: number;
  duration: number;
  snapped: boolean;
  non_music: boolean;
  predicted?: string;
  probs?: number[];
  logits?: number[];
}

export interface BoundaryInfo {
  times: number[];
  source: string;
  snapped_times: number[];
}

export interface SegmentsResponse {
  revision: number;
  song_id: string;
  duration: number;
  class_ids: string[];
  boundaries: BoundaryInfo;
  segments: SegmentInfo[];
}

export interface PlotSegment {
  index: number;
  start: number;
  end: number;
  predicted: string | null;
}

export interface PlotDataResponse {
  revision: number;
  song_id: string;
  duration: number;
  times: number[];
  speech: number[];
  music: number[];
  boundaries: number[];
  boundary_snapped: boolean[];
  segments: PlotSegment[];
}

export interface ClassDef {
  id: string;
  display_name: string;
  prompts: string[];
}

export interface ClassesResponse {
  revision: number;
  logit_scale: number;
  classes: ClassDef[];
}

export interface ClassesPayload {
  logit_scale: number;
  classes: ClassDef[];
}

export interface PutClassesResponse {
  revision: number;
  class_count: number;
}

export interface ClassError {
  class_id: string;
  error: string;
}

export interface RescoreResponse {
  revision: number;
  changed_count: number;
  /** Segment keys "<song_id>:<index>" whose predicted class changed. */
  changed: string[];
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: unknown,
    message?: string,
  ) {
    super(message ?? `request failed with status ${status}`);
    this.name = "ApiError";
  }

  get detail(): string {
    const body = this.body as { detail?: unknown } | null;
    return typeof body?.detail === "string" ? body.detail : this.message;
  }

  get classErrors(): ClassError[] {
    const body = this.body as { errors?: unknown } | null;
    return Array.isArray(body?.errors) ? (body.errors as ClassError[]) : [];
  }

  get missingKeys(): string[] {
    const body = this.body as { missing?: unknown } | null;
    return Array.isArray(body?.missing) ? (body.missing as string[]) : [];
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    private readonly base = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  songs(): Promise<SongsResponse> {
    return this.getJson("/api/songs");
  }

  segments(songId: string): Promise<SegmentsResponse> {
    return this.getJson(`/api/songs/${encodeURIComponent(songId)}/segments`);
  }

  plotData(songId: string): Promise<PlotDataResponse> {
    return this.getJson(`/api/songs/${encodeURIComponent(songId)}/plotdata`);
  }

  classes(): Promise<ClassesResponse> {
    return this.getJson("/api/classes");
  }

  async putClasses(payload: ClassesPayload): Promise<PutClassesResponse> {
    const resp = await this.fetchFn(`${this.base}/api/classes`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return this.parse(resp);
  }

  async rescore(): Promise<RescoreResponse> {
    const resp = await this.fetchFn(`${this.base}/api/rescore`, { method: "POST" });
    return this.parse(resp);
  }

  segmentAudioUrl(songId: string, index: number): string {
    return `${this.base}/api/segments/${encodeURIComponent(songId)}/${index}/audio`;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`);
    return this.parse(resp);
  }

  private async parse<T>(resp: Response): Promise<T> {
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      body = null;
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, body);
    }
    return body as T;
  }
}
