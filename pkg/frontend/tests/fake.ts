/**
 * Stateful fake service replaying documents recorded from the real server
 * by fixtures/generate.py. It walks the same edit-and-rerun phases the
 * recording did: phase0 (first solution), edited (track deleted, solution
 * stale), phase1 (second solution).
 */

import loopData from "../src/testdata/loop.json";

type Json = Record<string, unknown>;

export interface LoopFixture {
  injected_track_ids: string[];
  worst_camera: string;
  flagged_track: string;
  flagged_track_detail: Json;
  delete_result: Json;
  jobs: { run_000: Json; run_001: Json };
  compare: Json & { delta_rms: number };
  phase0: PhaseDoc;
  edited: PhaseDoc;
  phase1: PhaseDoc;
}

export interface PhaseDoc {
  session: Json;
  scene: Json;
  images: Json;
  records: { count: number; records: Json[] };
  stats_default: Json;
  image_details: Record<string, Json>;
  rank_images?: Json;
  rank_tracks?: Json;
}

export const loop = loopData as unknown as LoopFixture;

export type PhaseName = "phase0" | "edited" | "phase1";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export class FakeBackend {
  phase: PhaseName = "phase0";
  requests: string[] = [];
  /** The fetch function to hand to ApiClient. */
  readonly fetch = (input: string, init?: RequestInit): Promise<Response> =>
    Promise.resolve(this.route(input, init));

  constructor(private readonly fixture: LoopFixture = loop) {}

  private doc(): PhaseDoc {
    return this.fixture[this.phase];
  }

  private route(input: string, init?: RequestInit): Response {
    const url = new URL(input, "http://fake");
    const path = url.pathname;
    const method = (init?.method ?? "GET").toUpperCase();
    this.requests.push(`${method} ${path}`);

    if (method === "GET") return this.routeGet(path, url);

    if (method === "DELETE" && path.startsWith("/api/tracks/")) {
      const trackId = decodeURIComponent(path.slice("/api/tracks/".length));
      if (this.phase === "phase0" && trackId === this.fixture.flagged_track) {
        this.phase = "edited";
        return jsonResponse(this.fixture.delete_result);
      }
      return jsonResponse({ detail: `no track '${trackId}'` }, 404);
    }

    if (method === "POST" && path === "/api/ba/run") {
      const jobId = this.phase === "edited" ? "job_001" : "job_000";
      return jsonResponse(
        { job_id: jobId, state: "queued", progress: { iteration: 0, cost: null }, result_ref: null, error: null },
        202,
      );
    }

    return jsonResponse({ detail: `no fake route for ${method} ${path}` }, 404);
  }

  private routeGet(path: string, url: URL): Response {
    const phase = this.doc();
    switch (path) {
      case "/api/session":
        return jsonResponse(phase.session);
      case "/api/scene":
        return jsonResponse(phase.scene);
      case "/api/images":
        return jsonResponse(phase.images);
      case "/api/records":
        return jsonResponse(phase.records);
      case "/api/stats":
        return jsonResponse(phase.stats_default);
      case "/api/rank/images":
        if (!phase.rank_images) {
          return jsonResponse({ detail: "no optimizer result matches the current edit log" }, 422);
        }
        return jsonResponse(phase.rank_images);
      case "/api/rank/tracks":
        if (!phase.rank_tracks) {
          return jsonResponse({ detail: "no optimizer result matches the current edit log" }, 422);
        }
        return jsonResponse(phase.rank_tracks);
      case "/api/compare": {
        const a = url.searchParams.get("a");
        const b = url.searchParams.get("b");
        if (a === "run_000" && b === "run_001" && this.phase === "phase1") {
          return jsonResponse(this.fixture.compare);
        }
        return jsonResponse({ detail: `no recorded comparison ${a} vs ${b}` }, 404);
      }
      default:
        break;
    }

    if (path.startsWith("/api/images/")) {
      const cameraId = decodeURIComponent(path.slice("/api/images/".length));
      const detail = this.doc().image_details[cameraId];
      return detail
        ? jsonResponse(detail)
        : jsonResponse({ detail: `no camera '${cameraId}'` }, 404);
    }
    if (path.startsWith("/api/tracks/")) {
      const trackId = decodeURIComponent(path.slice("/api/tracks/".length));
      if (trackId === this.fixture.flagged_track && this.phase === "phase0") {
        return jsonResponse(this.fixture.flagged_track_detail);
      }
      return jsonResponse({ detail: `no track '${trackId}'` }, 404);
    }
    if (path.startsWith("/api/jobs/")) {
      const jobId = decodeURIComponent(path.slice("/api/jobs/".length));
      if (jobId === "job_001" && this.phase === "edited") {
        // Polling the finished rerun promotes the fake to the new solution.
        this.phase = "phase1";
        return jsonResponse(this.fixture.jobs.run_001);
      }
      if (jobId === "job_001" && this.phase === "phase1") {
        return jsonResponse(this.fixture.jobs.run_001);
      }
      if (jobId === "job_000") {
        return jsonResponse(this.fixture.jobs.run_000);
      }
      return jsonResponse({ detail: `no job '${jobId}'` }, 404);
    }
    return jsonResponse({ detail: `no fake route for GET ${path}` }, 404);
  }
}

/** Let pending microtasks and zero-delay timers run. */
export async function flush(rounds = 6): Promise<void> {
  for (let i = 0; i < rounds; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}
