/**
 * Typed client for the review service. Every number the UI shows comes
 * through here; the client performs no residual math of its own.
 */

import type { FilterDTO, FilterState } from "./filter";
import { filterToJSON } from "./filter";

export interface PoseDTO {
  rotation: [number, number, number, number];
  center: [number, number, number];
}

export interface IntrinsicsDTO {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface CameraDTO {
  id: string;
  image_ref: string | null;
  image_url: string | null;
  intrinsics: IntrinsicsDTO;
  pose_initial: PoseDTO | null;
  pose_final: PoseDTO | null;
}

export interface ScenePointDTO {
  id: string;
  initial: [number, number, number] | null;
  final: [number, number, number] | null;
  n_observations: number;
}

export interface SceneDTO {
  cameras: CameraDTO[];
  points: ScenePointDTO[];
  has_final: boolean;
}

export interface RecordDTO {
  camera_id: string;
  track_id: string;
  vector: [number, number];
  length: number;
  angle: number;
  kind: "initial" | "final";
  tiepoint: [number, number] | null;
}

export interface RecordsDTO {
  count: number;
  records: RecordDTO[];
}

export interface HistogramDTO {
  bin_edges: number[];
  counts: number[];
}

export interface RadialDTO {
  endpoints: [number, number][];
  max_radius: number;
}

export interface SlopePairDTO {
  camera_id: string;
  track_id: string;
  pre_length: number;
  post_length: number;
}

export interface ImageSummaryDTO {
  camera_id: string;
  counts: Record<string, number>;
  histogram: HistogramDTO;
  radial: RadialDTO;
  slopes: SlopePairDTO[];
}

export interface ImageDetailDTO extends CameraDTO {
  summary: ImageSummaryDTO;
}

export interface ImageRowDTO {
  camera_id: string;
  image_ref: string | null;
  image_url: string | null;
  n_observations: number;
}

export interface StatsDTO {
  count: number;
  kind_counts: { initial: number; final: number };
  histogram: HistogramDTO;
  radial: RadialDTO;
  concentration: { initial: number | null; final: number | null };
  rms: { initial: number | null; final: number | null };
  filter: FilterDTO;
}

export interface TrackObservationDTO {
  camera_id: string;
  pixel: [number, number];
}

export interface TrackDetailDTO {
  id: string;
  observations: TrackObservationDTO[];
  point_initial: [number, number, number] | null;
  point_final: [number, number, number] | null;
  residuals: Omit<RecordDTO, "tiepoint">[];
  cameras: CameraDTO[];
}

export interface TrackScoreDTO {
  track_id: string;
  max_final_length: number;
  mean_final_length: number;
  delta_rms: number;
  concentration: number;
}

export interface ImageScoreDTO {
  camera_id: string;
  max_final_length: number;
  mean_final_length: number;
  delta_rms: number;
  concentration: number;
  n_observations: number;
}

export interface EditDTO {
  kind: string;
  target_id: string;
  timestamp: number;
}

export interface RunDTO {
  id: string;
  edit_index: number;
  digest: string;
  config: Record<string, unknown>;
  initial_cost: number;
  final_cost: number;
  iterations: number;
  converged: boolean;
  termination_reason: string;
  cost_trace: number[];
}

export interface SessionDTO {
  cameras_path: string | null;
  tracks_path: string | null;
  digest: string;
  n_cameras: number;
  n_tracks: number;
  n_observations: number;
  edits: EditDTO[];
  runs: RunDTO[];
  current_run: string | null;
  has_result: boolean;
  validation_warnings: string[];
}

export interface JobDTO {
  job_id: string;
  state: "queued" | "running" | "done" | "failed" | "cancelled";
  progress: { iteration: number; cost: number | null };
  result_ref: string | null;
  error: string | null;
}

export interface SlopeSummaryDTO {
  id: string;
  rms_a: number;
  rms_b: number;
}

export interface CompareDTO {
  run_a: string;
  run_b: string;
  paired_observations: number;
  delta_total_error: number;
  delta_rms: number;
  track_slopes: SlopeSummaryDTO[];
  image_slopes: SlopeSummaryDTO[];
  removed_track_ids: string[];
  added_track_ids: string[];
  removed_camera_ids: string[];
  added_camera_ids: string[];
}

export interface EditResultDTO {
  edit: EditDTO;
  warnings: string[];
  n_cameras: number;
  n_tracks: number;
  n_observations: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
    public readonly url: string,
  ) {
    super(`${status} from ${url}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike,
    private readonly base: string = "",
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const url = this.base + path;
    const response = await this.fetchFn(url, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = String(body.detail);
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail, url);
    }
    return (await response.json()) as T;
  }

  private get<T>(path: string, params?: Record<string, string>): Promise<T> {
    const query = params ? `?${new URLSearchParams(params)}` : "";
    return this.request<T>(path + query);
  }

  getSession(): Promise<SessionDTO> {
    return this.get("/api/session");
  }

  getScene(): Promise<SceneDTO> {
    return this.get("/api/scene");
  }

  getImages(): Promise<{ images: ImageRowDTO[] }> {
    return this.get("/api/images");
  }

  getImage(cameraId: string, bins?: number): Promise<ImageDetailDTO> {
    const params = bins !== undefined ? { bins: String(bins) } : undefined;
    return this.get(`/api/images/${encodeURIComponent(cameraId)}`, params);
  }

  getTrack(trackId: string): Promise<TrackDetailDTO> {
    return this.get(`/api/tracks/${encodeURIComponent(trackId)}`);
  }

  getRecords(scope?: { cameraId?: string; trackId?: string }): Promise<RecordsDTO> {
    const params: Record<string, string> = {};
    if (scope?.cameraId !== undefined) params.camera_id = scope.cameraId;
    if (scope?.trackId !== undefined) params.track_id = scope.trackId;
    return this.get("/api/records", Object.keys(params).length ? params : undefined);
  }

  getStats(filter: FilterState, bins?: number): Promise<StatsDTO> {
    const params: Record<string, string> = { filter: JSON.stringify(filterToJSON(filter)) };
    if (bins !== undefined) params.bins = String(bins);
    return this.get("/api/stats", params);
  }

  rankTracks(key: string, limit?: number): Promise<{ key: string; tracks: TrackScoreDTO[] }> {
    const params: Record<string, string> = { key };
    if (limit !== undefined) params.limit = String(limit);
    return this.get("/api/rank/tracks", params);
  }

  rankImages(key: string, limit?: number): Promise<{ key: string; images: ImageScoreDTO[] }> {
    const params: Record<string, string> = { key };
    if (limit !== undefined) params.limit = String(limit);
    return this.get("/api/rank/images", params);
  }

  compareRuns(a: string, b: string): Promise<CompareDTO> {
    return this.get("/api/compare", { a, b });
  }

  postEdit(kind: string, targetId: string): Promise<EditResultDTO> {
    return this.request("/api/edits", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ kind, target_id: targetId }),
    });
  }

  deleteTrack(trackId: string): Promise<EditResultDTO> {
    return this.request(`/api/tracks/${encodeURIComponent(trackId)}`, { method: "DELETE" });
  }

  deleteCamera(cameraId: string): Promise<EditResultDTO> {
    return this.request(`/api/cameras/${encodeURIComponent(cameraId)}`, { method: "DELETE" });
  }

  startRun(config?: Record<string, unknown>): Promise<JobDTO> {
    return this.request("/api/ba/run", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ config: config ?? {} }),
    });
  }

  getJob(jobId: string): Promise<JobDTO> {
    return this.get(`/api/jobs/${encodeURIComponent(jobId)}`);
  }

  cancelJob(jobId: string): Promise<JobDTO> {
    return this.request(`/api/jobs/${encodeURIComponent(jobId)}/cancel`, { method: "POST" });
  }
}
