/**
 * Rendering contracts: residual line geometry, the two-tone palette, the
 * flagging rule, chart structure, and the ill-posed track badge. These run
 * on handcrafted documents where the right answer is known by construction.
 */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import type { CameraDTO, RecordDTO, StatsDTO, TrackDetailDTO } from "../src/api";
import { ApiClient } from "../src/api";
import { mountApp, resetViewCaches } from "../src/app";
import { kindColor, LEGEND_LINES, PALETTE } from "../src/palette";
import { rayAngleDeg, rotationFromQuaternion } from "../src/projection";
import { AppStore } from "../src/store";
import { buildTrackCards, CROP_HALF_WINDOW, FLAG_FACTOR } from "../src/views/image";
import { ILL_POSED_ANGLE_DEG, maxTriangulationAngleDeg } from "../src/views/track";
import { histogramChart, radialChart, slopeChart } from "../src/widgets/charts";
import { flush } from "./fake";

function camera(id: string, center: [number, number, number]): CameraDTO {
  return {
    id,
    image_ref: null,
    image_url: null,
    intrinsics: { fx: 500, fy: 500, cx: 320, cy: 240, width: 640, height: 480 },
    pose_initial: { rotation: [1, 0, 0, 0], center },
    pose_final: null,
  };
}

function record(
  trackId: string,
  tiepoint: [number, number],
  vector: [number, number],
  kind: "initial" | "final" = "initial",
): RecordDTO {
  const length = Math.hypot(vector[0], vector[1]);
  const angle = ((Math.atan2(vector[1], vector[0]) * 180) / Math.PI + 360) % 360;
  return { camera_id: "cam_a", track_id: trackId, vector, length, angle, kind, tiepoint };
}

const emptyStats: StatsDTO = {
  count: 0,
  kind_counts: { initial: 0, final: 0 },
  histogram: { bin_edges: [0, 1], counts: [0] },
  radial: { endpoints: [], max_radius: 0 },
  concentration: { initial: null, final: null },
  rms: { initial: null, final: null },
  filter: {
    kinds: ["final", "initial"],
    length_range: [0, null],
    angle_range: [0, 0],
    precision: 12,
    scale: 1,
  },
};

/** A one-camera service with handcrafted records and one track document. */
function miniFetch(cameras: CameraDTO[], records: RecordDTO[], track?: TrackDetailDTO) {
  const session = {
    cameras_path: null,
    tracks_path: null,
    digest: "test",
    n_cameras: cameras.length,
    n_tracks: 1,
    n_observations: records.length,
    edits: [],
    runs: [],
    current_run: null,
    has_result: false,
    validation_warnings: [],
  };
  const docs = new Map<string, unknown>([
    ["/api/session", session],
    ["/api/scene", { cameras, points: [], has_final: false }],
    [
      "/api/images",
      {
        images: cameras.map((c) => ({
          camera_id: c.id,
          image_ref: null,
          image_url: null,
          n_observations: records.length,
        })),
      },
    ],
    ["/api/records", { count: records.length, records }],
    ["/api/stats", { ...emptyStats, count: records.length }],
  ]);
  if (track) docs.set(`/api/tracks/${track.id}`, track);
  return (input: string): Promise<Response> => {
    const path = new URL(input, "http://fake").pathname;
    const doc = docs.get(path);
    const body = doc ?? { detail: `no fake route for ${path}` };
    return Promise.resolve(
      new Response(JSON.stringify(body), {
        status: doc ? 200 : 404,
        headers: { "content-type": "application/json" },
      }),
    );
  };
}

let root: HTMLElement;
let unmount: (() => void) | null = null;

beforeEach(() => {
  document.body.innerHTML = "";
  root = document.createElement("div");
  document.body.append(root);
  resetViewCaches();
});

afterEach(() => {
  unmount?.();
  unmount = null;
});

async function mountMini(
  cameras: CameraDTO[],
  records: RecordDTO[],
  track?: TrackDetailDTO,
): Promise<AppStore> {
  const store = new AppStore(new ApiClient(miniFetch(cameras, records, track)), 0);
  unmount = mountApp(store, root);
  await store.loadDataset();
  await flush();
  return store;
}

describe("palette", () => {
  it("is the two-tone blue and orange pair", () => {
    expect(PALETTE.initial).toBe("#0072b2");
    expect(PALETTE.final).toBe("#e69f00");
    expect(kindColor("initial")).toBe(PALETTE.initial);
    expect(kindColor("final")).toBe(PALETTE.final);
  });

  it("documents the drawing conventions", () => {
    const text = LEGEND_LINES.join(" ");
    expect(text).toContain("tail at tiepoint");
    expect(text).toContain("arrowhead at reprojection");
    expect(text).toContain("membership never changes with scale");
  });
});

describe("residual lines in the image view", () => {
  it("run from the tiepoint to the scaled reprojection offset", async () => {
    const store = await mountMini(
      [camera("cam_a", [0, 0, 0])],
      [record("trk_a", [100, 200], [3, -4], "initial"), record("trk_b", [50, 60], [1, 2], "final")],
    );
    store.openFrom("scene", "image", "cam_a");
    await store.setFilter({ scale: 2 });
    await flush();

    const lines = root.querySelectorAll<SVGLineElement>(
      '[data-role="image-overlay"] line.residual-line',
    );
    expect(lines.length).toBe(2);
    const byTrack = new Map(
      [...lines].map((line) => [line.getAttribute("data-track-id"), line]),
    );

    const a = byTrack.get("trk_a")!;
    expect(a.getAttribute("x1")).toBe("100");
    expect(a.getAttribute("y1")).toBe("200");
    expect(a.getAttribute("x2")).toBe("106");
    expect(a.getAttribute("y2")).toBe("192");
    expect(a.getAttribute("stroke")).toBe(PALETTE.initial);
    expect(a.getAttribute("marker-end")).toBe("url(#arrow-initial)");

    const b = byTrack.get("trk_b")!;
    expect(b.getAttribute("x2")).toBe("52");
    expect(b.getAttribute("y2")).toBe("64");
    expect(b.getAttribute("stroke")).toBe(PALETTE.final);
    expect(b.getAttribute("marker-end")).toBe("url(#arrow-final)");
  });

  it("centers each track crop on its tiepoint with the fixed half-window", async () => {
    const store = await mountMini(
      [camera("cam_a", [0, 0, 0])],
      [record("trk_a", [100, 200], [3, -4])],
    );
    store.openFrom("scene", "image", "cam_a");
    await flush();
    const crop = root.querySelector('[data-role="track-cards"] svg[data-role="crop"]')!;
    expect(crop.getAttribute("viewBox")).toBe(
      `${100 - CROP_HALF_WINDOW} ${200 - CROP_HALF_WINDOW} ${2 * CROP_HALF_WINDOW} ${2 * CROP_HALF_WINDOW}`,
    );
  });

  it("counts shown against total residuals for the image", async () => {
    const store = await mountMini(
      [camera("cam_a", [0, 0, 0])],
      [
        record("trk_a", [10, 10], [0.1, 0], "initial"),
        record("trk_a", [10, 10], [3, 0], "final"),
        record("trk_b", [20, 20], [0.2, 0], "initial"),
      ],
    );
    store.openFrom("scene", "image", "cam_a");
    await store.setFilter({ kinds: new Set(["final"]) });
    await flush();
    expect(root.querySelector('[data-role="image-count"]')!.textContent).toContain(
      "showing 1 of 3 residuals",
    );
  });
});

describe("track card flagging", () => {
  it("flags a track whose max final residual dwarfs the image median", () => {
    const records: RecordDTO[] = [
      record("trk_1", [0, 0], [1, 0], "final"),
      record("trk_2", [0, 0], [0.9, 0], "final"),
      record("trk_3", [0, 0], [1.1, 0], "final"),
      record("trk_4", [0, 0], [1, 0], "final"),
      record("trk_hot", [0, 0], [10, 0], "final"),
    ];
    const cards = buildTrackCards(records);
    expect(cards[0]!.trackId).toBe("trk_hot");
    expect(cards[0]!.flagged).toBe(true);
    expect(cards.filter((c) => c.flagged).map((c) => c.trackId)).toEqual(["trk_hot"]);
    expect(cards.map((c) => c.trackId)).toEqual(["trk_hot", "trk_3", "trk_1", "trk_4", "trk_2"]);
  });

  it("uses exactly the documented factor", () => {
    const base: RecordDTO[] = [
      record("trk_1", [0, 0], [1, 0], "final"),
      record("trk_2", [0, 0], [1, 0], "final"),
      record("trk_3", [0, 0], [1, 0], "final"),
    ];
    const just = buildTrackCards([...base, record("trk_x", [0, 0], [FLAG_FACTOR, 0], "final")]);
    expect(just.find((c) => c.trackId === "trk_x")!.flagged).toBe(true);
    const under = buildTrackCards([
      ...base,
      record("trk_x", [0, 0], [FLAG_FACTOR - 0.01, 0], "final"),
    ]);
    expect(under.find((c) => c.trackId === "trk_x")!.flagged).toBe(false);
  });

  it("never flags without final residuals", () => {
    const cards = buildTrackCards([
      record("trk_1", [0, 0], [1, 0], "initial"),
      record("trk_2", [0, 0], [30, 0], "initial"),
    ]);
    expect(cards.every((c) => !c.flagged)).toBe(true);
  });
});

describe("charts", () => {
  it("histogram draws one bar per bin with the counts attached", () => {
    const chart = histogramChart({ bin_edges: [0, 1, 2, 3], counts: [1, 3, 2] });
    const bars = chart.querySelectorAll("rect.hist-bar");
    expect(bars.length).toBe(3);
    expect([...bars].map((b) => b.getAttribute("data-count"))).toEqual(["1", "3", "2"]);
    const heights = [...bars].map((b) => Number(b.getAttribute("height")));
    expect(heights[1]).toBeGreaterThan(heights[0]!);
    expect(heights[1]).toBeGreaterThan(heights[2]!);
  });

  it("radial chart draws one spoke per endpoint", () => {
    const chart = radialChart({
      endpoints: [
        [1, 0],
        [0, 1],
        [-1, -1],
      ],
      max_radius: 2,
    });
    expect(chart.querySelectorAll("line.radial-spoke").length).toBe(3);
  });

  it("slope chart colors falling segments as improvements", () => {
    const chart = slopeChart([
      { camera_id: "cam_a", track_id: "trk_1", pre_length: 2, post_length: 1 },
      { camera_id: "cam_a", track_id: "trk_2", pre_length: 1, post_length: 2 },
    ]);
    const segments = chart.querySelectorAll("line.slope-segment");
    expect(segments.length).toBe(2);
    expect(segments[0]!.getAttribute("stroke")).toBe(PALETTE.final);
    expect(segments[1]!.getAttribute("stroke")).not.toBe(PALETTE.final);
  });
});

describe("triangulation geometry", () => {
  it("measures the ray angle between camera centers at the point", () => {
    expect(rayAngleDeg([0, 0, 0], [10, 0, 0], [0, 0, 10])).toBeCloseTo(45, 6);
    expect(rayAngleDeg([0, 0, 0], [0, 0, 5], [0, 0, 10])).toBeCloseTo(0, 6);
    expect(maxTriangulationAngleDeg([[0, 0, 0], [10, 0, 0], [0.1, 0, 0]], [0, 0, 10])).toBeCloseTo(
      45,
      6,
    );
  });

  it("identity quaternion maps to the identity rotation", () => {
    const rot = rotationFromQuaternion([1, 0, 0, 0]);
    expect([...rot]).toEqual([1, 0, 0, 0, 1, 0, 0, 0, 1]);
  });

  async function mountTrack(centerB: [number, number, number]): Promise<void> {
    const cameras = [camera("cam_a", [0, 0, 0]), camera("cam_b", centerB)];
    const detail: TrackDetailDTO = {
      id: "trk_geo",
      observations: [
        { camera_id: "cam_a", pixel: [10, 10] },
        { camera_id: "cam_b", pixel: [20, 20] },
      ],
      point_initial: [0, 0, 10],
      point_final: null,
      residuals: [],
      cameras,
    };
    const store = await mountMini(cameras, [], detail);
    store.openFrom("scene", "track", "trk_geo");
    await flush();
  }

  it("badges a narrow-baseline track as ill-posed", async () => {
    // Centers 0.2 apart looking at a point 10 away: about 1.15 degrees.
    await mountTrack([0.2, 0, 0]);
    const badge = root.querySelector('[data-role="ill-posed"]');
    expect(badge).not.toBeNull();
    expect(badge!.textContent).toContain("ill-posed");
    expect(root.querySelector('[data-role="triangulation"]')).toBeNull();
    const angle = maxTriangulationAngleDeg([[0, 0, 0], [0.2, 0, 0]], [0, 0, 10]);
    expect(angle).toBeLessThan(ILL_POSED_ANGLE_DEG);
  });

  it("reports the angle plainly when the baseline is wide", async () => {
    await mountTrack([10, 0, 0]);
    expect(root.querySelector('[data-role="ill-posed"]')).toBeNull();
    const note = root.querySelector('[data-role="triangulation"]');
    expect(note).not.toBeNull();
    expect(note!.textContent).toContain("45.0");
    expect(root.querySelector('[data-role="track-scene"]')).not.toBeNull();
    expect(root.querySelectorAll('[data-role="obs-strip"] figure.obs-cell').length).toBe(2);
  });
});
