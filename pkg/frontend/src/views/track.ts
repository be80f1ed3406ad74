/**
 * Track view: every observation of one track as a cropped patch with its
 * residuals, a mini 3D viewport of the contributing cameras and the point,
 * the residual table, and the delete control. A low maximum triangulation
 * angle marks the track ill-posed.
 */

import type { RecordDTO, TrackDetailDTO } from "../api";
import { kindColor } from "../palette";
import type { Vec3 } from "../projection";
import { defaultOrbit, fitViewport, frustumPoints, project, rayAngleDeg } from "../projection";
import type { AppStore } from "../store";
import { el, fmt, svg } from "../svg";
import { CROP_HALF_WINDOW } from "./image";

/** Below this maximum pairwise ray angle a track counts as ill-posed. */
export const ILL_POSED_ANGLE_DEG = 2;

let cache: { trackId: string; detail: TrackDetailDTO | null; epoch: number } | null = null;

export function resetTrackView(): void {
  cache = null;
}

/** Max pairwise triangulation angle over the observing camera centers. */
export function maxTriangulationAngleDeg(centers: Vec3[], point: Vec3): number {
  let best = 0;
  for (let i = 0; i < centers.length; i += 1) {
    for (let j = i + 1; j < centers.length; j += 1) {
      const angle = rayAngleDeg(centers[i]!, centers[j]!, point);
      if (angle > best) best = angle;
    }
  }
  return best;
}

function patchSvg(records: RecordDTO[], tiepoint: [number, number], scale: number): SVGElement {
  const [u, v] = tiepoint;
  const half = CROP_HALF_WINDOW;
  const patch = svg("svg", {
    viewBox: `${u - half} ${v - half} ${2 * half} ${2 * half}`,
    width: 112,
    height: 112,
    class: "track-crop",
  });
  patch.append(
    svg("rect", { x: u - half, y: v - half, width: 2 * half, height: 2 * half, class: "crop-ground" }),
  );
  for (const rec of records) {
    const [dx, dy] = rec.vector;
    patch.append(
      svg("line", {
        class: `residual-line residual-${rec.kind}`,
        x1: u,
        y1: v,
        x2: u + dx * scale,
        y2: v + dy * scale,
        stroke: kindColor(rec.kind),
        "stroke-width": 1.2,
      }),
    );
  }
  patch.append(svg("circle", { cx: u, cy: v, r: 1.6, fill: "#ffffff" }));
  return patch;
}

function miniViewport(detail: TrackDetailDTO): SVGElement {
  const width = 300;
  const height = 220;
  const canvas = svg("svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    class: "track-mini-scene",
    "data-role": "track-scene",
  });
  const cloud: Vec3[] = [];
  for (const camera of detail.cameras) {
    const pose = camera.pose_final ?? camera.pose_initial;
    if (pose) cloud.push(pose.center);
  }
  for (const p of [detail.point_initial, detail.point_final]) if (p) cloud.push(p);
  if (cloud.length === 0) return canvas;
  const viewport = fitViewport(cloud, width, height, defaultOrbit());

  for (const camera of detail.cameras) {
    const pose = camera.pose_final ?? camera.pose_initial;
    if (!pose) continue;
    const kind = camera.pose_final ? "final" : "initial";
    const depth = viewport.extent * 0.2;
    const [apex, ...corners] = frustumPoints(camera, pose, depth).map((p) => project(viewport, p));
    canvas.append(
      svg("path", {
        d: corners.map((c) => `M ${apex![0]} ${apex![1]} L ${c[0]} ${c[1]}`).join(" "),
        stroke: kindColor(kind),
        fill: "none",
        "stroke-opacity": 0.8,
      }),
    );
    // Sight line from the camera to the point it helps triangulate.
    const target = detail.point_final ?? detail.point_initial;
    if (target) {
      const [px, py] = project(viewport, target);
      canvas.append(
        svg("line", {
          x1: apex![0],
          y1: apex![1],
          x2: px,
          y2: py,
          stroke: kindColor(kind),
          "stroke-opacity": 0.25,
          "stroke-dasharray": "3 3",
        }),
      );
    }
  }
  for (const kind of ["initial", "final"] as const) {
    const p = kind === "final" ? detail.point_final : detail.point_initial;
    if (!p) continue;
    const [x, y] = project(viewport, p);
    canvas.append(svg("circle", { cx: x, cy: y, r: 3, fill: kindColor(kind) }));
  }
  return canvas;
}

export function renderTrackView(store: AppStore, rerender: () => void): HTMLElement {
  const root = el("section", { class: "view view-track", "data-view": "track" });
  const trackId = store.view.selectedTrackId;
  if (!trackId) {
    root.append(el("p", { class: "placeholder" }, ["No track selected; pick one from the scene or an image."]));
    return root;
  }

  if (!cache || cache.trackId !== trackId || cache.epoch !== store.snapshotEpoch) {
    root.append(el("p", { class: "placeholder" }, [`loading ${trackId}`]));
    const epoch = store.snapshotEpoch;
    void store.api
      .getTrack(trackId)
      .then((detail) => {
        cache = { trackId, detail, epoch };
        rerender();
      })
      .catch((err) => {
        // Cache the failure too, so a missing track does not refetch forever.
        cache = { trackId, detail: null, epoch };
        store.lastError = String(err instanceof Error ? err.message : err);
        rerender();
      });
    return root;
  }
  if (cache.detail === null) {
    root.append(
      el("p", { class: "placeholder" }, [`track ${trackId} is not available in the current dataset`]),
    );
    return root;
  }
  const detail = cache.detail;
  const scale = store.view.filter.scale;
  const visible = store
    .visibleRecords()
    .filter((rec) => rec.track_id === trackId);

  const header = el("header", { class: "track-header" }, [el("h2", {}, [trackId])]);

  const point = detail.point_final ?? detail.point_initial;
  const centers: Vec3[] = [];
  for (const camera of detail.cameras) {
    const pose = camera.pose_final ?? camera.pose_initial;
    if (pose) centers.push(pose.center);
  }
  if (point && centers.length >= 2) {
    const angle = maxTriangulationAngleDeg(centers, point);
    if (angle < ILL_POSED_ANGLE_DEG) {
      header.append(
        el("span", { class: "flag-badge", "data-role": "ill-posed" }, [
          `ill-posed: max triangulation angle ${fmt(angle, 2)} deg`,
        ]),
      );
    } else {
      header.append(
        el("span", { class: "muted", "data-role": "triangulation" }, [
          `max triangulation angle ${fmt(angle, 1)} deg`,
        ]),
      );
    }
  }

  const strip = el("div", { class: "obs-strip", "data-role": "obs-strip" });
  for (const obs of detail.observations) {
    const recs = visible.filter((rec) => rec.camera_id === obs.camera_id);
    const cell = el("figure", { class: "obs-cell", "data-camera-id": obs.camera_id });
    cell.append(patchSvg(recs, obs.pixel, scale));
    cell.append(el("figcaption", {}, [`${obs.camera_id} @ (${fmt(obs.pixel[0], 1)}, ${fmt(obs.pixel[1], 1)})`]));
    strip.append(cell);
  }

  const table = el("table", { class: "residual-table" });
  table.append(
    el("tr", {}, [
      el("th", {}, ["camera"]),
      el("th", {}, ["kind"]),
      el("th", {}, ["length (px)"]),
      el("th", {}, ["angle (deg)"]),
    ]),
  );
  for (const rec of visible) {
    const row = el("tr", { "data-kind": rec.kind });
    row.append(
      el("td", {}, [rec.camera_id]),
      el("td", {}, [rec.kind]),
      el("td", {}, [fmt(rec.length, 4)]),
      el("td", {}, [fmt(rec.angle, 1)]),
    );
    const swatch = row.firstChild as HTMLElement;
    swatch.style.borderLeft = `3px solid ${kindColor(rec.kind)}`;
    table.append(row);
  }

  const points = el("p", { class: "muted" }, [
    `point initial ${detail.point_initial ? detail.point_initial.map((v) => fmt(v, 3)).join(", ") : "-"}`,
    detail.point_final ? `; final ${detail.point_final.map((v) => fmt(v, 3)).join(", ")}` : "",
  ]);

  const deleteButton = el("button", { type: "button", "data-role": "delete-track" }, [
    "Delete track",
  ]) as HTMLButtonElement;
  deleteButton.disabled = store.busy();
  deleteButton.addEventListener("click", () => {
    void store
      .deleteTrack(trackId)
      .then(() => {
        cache = null;
        store.navigateTab("image");
      })
      .catch((err) => {
        store.lastError = String(err instanceof Error ? err.message : err);
      });
  });

  root.append(
    header,
    strip,
    el("div", { class: "track-body" }, [
      miniViewport(detail),
      el("div", { class: "track-tables" }, [table, points, deleteButton]),
    ]),
  );
  return root;
}
