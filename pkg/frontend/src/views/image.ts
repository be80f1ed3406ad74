/**
 * Image view: the photo (or a neutral ground when no image file is served)
 * under an overlay of residual lines, tail at the tiepoint and arrowhead at
 * the reprojection, plus a rail of per-track cards with crops centered on
 * each track's tiepoint. Deleting a track issues the edit and offers a
 * rerun; clicking a card opens the track view.
 */

import type { RecordDTO } from "../api";
import { kindColor } from "../palette";
import type { AppStore } from "../store";
import { el, fmt, svg } from "../svg";

/** Half-window, in pixels, of the crop shown on each track card. */
export const CROP_HALF_WINDOW = 64;

/** A track card is flagged when its max final length is 5x the image median. */
export const FLAG_FACTOR = 5;

interface ImageUiState {
  zoom: number;
  panX: number;
  panY: number;
  showAllCards: boolean;
}

const uiState: ImageUiState = { zoom: 1, panX: 0, panY: 0, showAllCards: false };
let uiCameraId: string | null = null;

export function resetImageView(): void {
  uiState.zoom = 1;
  uiState.panX = 0;
  uiState.panY = 0;
  uiState.showAllCards = false;
  uiCameraId = null;
}

function median(values: number[]): number {
  if (values.length === 0) return 0;
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 === 1 ? sorted[mid]! : (sorted[mid - 1]! + sorted[mid]!) / 2;
}

export interface TrackCardModel {
  trackId: string;
  tiepoint: [number, number] | null;
  records: RecordDTO[];
  maxShown: number;
  flagged: boolean;
}

/**
 * Group an image's visible records by track, order worst first, and flag
 * tracks whose max final residual stands far above the image median.
 */
export function buildTrackCards(visibleForCamera: RecordDTO[]): TrackCardModel[] {
  const byTrack = new Map<string, RecordDTO[]>();
  for (const rec of visibleForCamera) {
    const list = byTrack.get(rec.track_id);
    if (list) list.push(rec);
    else byTrack.set(rec.track_id, [rec]);
  }
  const maxFinalByTrack = new Map<string, number>();
  for (const [trackId, recs] of byTrack) {
    const finals = recs.filter((r) => r.kind === "final").map((r) => r.length);
    if (finals.length > 0) maxFinalByTrack.set(trackId, Math.max(...finals));
  }
  const med = median([...maxFinalByTrack.values()]);
  const cards: TrackCardModel[] = [];
  for (const [trackId, recs] of byTrack) {
    const maxFinal = maxFinalByTrack.get(trackId);
    const maxShown = maxFinal ?? Math.max(...recs.map((r) => r.length));
    cards.push({
      trackId,
      tiepoint: recs.find((r) => r.tiepoint)?.tiepoint ?? null,
      records: recs,
      maxShown,
      flagged: maxFinal !== undefined && med > 0 && maxFinal >= FLAG_FACTOR * med,
    });
  }
  cards.sort((a, b) => b.maxShown - a.maxShown || a.trackId.localeCompare(b.trackId));
  return cards;
}

function residualLines(records: RecordDTO[], scale: number, strokeWidth: number): SVGElement[] {
  const lines: SVGElement[] = [];
  for (const rec of records) {
    if (!rec.tiepoint) continue;
    const [u, v] = rec.tiepoint;
    const [dx, dy] = rec.vector;
    lines.push(
      svg("line", {
        class: `residual-line residual-${rec.kind}`,
        x1: u,
        y1: v,
        x2: u + dx * scale,
        y2: v + dy * scale,
        stroke: kindColor(rec.kind),
        "stroke-width": strokeWidth,
        "marker-end": `url(#arrow-${rec.kind})`,
        "data-track-id": rec.track_id,
        "data-kind": rec.kind,
      }),
    );
  }
  return lines;
}

function arrowDefs(): SVGElement {
  const defs = svg("defs");
  for (const kind of ["initial", "final"] as const) {
    const marker = svg("marker", {
      id: `arrow-${kind}`,
      viewBox: "0 0 6 6",
      refX: 5,
      refY: 3,
      markerWidth: 5,
      markerHeight: 5,
      orient: "auto-start-reverse",
    });
    marker.append(svg("path", { d: "M 0 0 L 6 3 L 0 6 z", fill: kindColor(kind) }));
    defs.append(marker);
  }
  return defs;
}

function cropSvg(card: TrackCardModel, scale: number): SVGElement {
  const [u, v] = card.tiepoint ?? [0, 0];
  const view = `${u - CROP_HALF_WINDOW} ${v - CROP_HALF_WINDOW} ${2 * CROP_HALF_WINDOW} ${2 * CROP_HALF_WINDOW}`;
  const crop = svg("svg", {
    viewBox: view,
    width: 96,
    height: 96,
    class: "track-crop",
    "data-role": "crop",
  });
  crop.append(arrowDefs());
  crop.append(
    svg("rect", {
      x: u - CROP_HALF_WINDOW,
      y: v - CROP_HALF_WINDOW,
      width: 2 * CROP_HALF_WINDOW,
      height: 2 * CROP_HALF_WINDOW,
      class: "crop-ground",
    }),
  );
  crop.append(...residualLines(card.records, scale, 1.2));
  if (card.tiepoint) {
    crop.append(svg("circle", { cx: u, cy: v, r: 1.6, class: "tiepoint-dot", fill: "#ffffff" }));
  }
  return crop;
}

export function renderImageView(store: AppStore, rerender: () => void): HTMLElement {
  const root = el("section", { class: "view view-image", "data-view": "image" });
  const cameraId = store.view.selectedCameraId;
  if (!cameraId) {
    root.append(el("p", { class: "placeholder" }, ["No image selected; pick one from the scene or the grid."]));
    return root;
  }
  if (uiCameraId !== cameraId) {
    uiState.zoom = 1;
    uiState.panX = 0;
    uiState.panY = 0;
    uiState.showAllCards = false;
    uiCameraId = cameraId;
  }

  const camera = store.scene?.cameras.find((c) => c.id === cameraId);
  if (!camera) {
    root.append(el("p", { class: "placeholder" }, [`camera ${cameraId} is not in the current dataset`]));
    return root;
  }

  const scale = store.view.filter.scale;
  const visible = store.visibleRecords().filter((rec) => rec.camera_id === cameraId);
  const allForCamera = store.records.filter((rec) => rec.camera_id === cameraId);

  const { width, height } = camera.intrinsics;
  const vw = width / uiState.zoom;
  const vh = height / uiState.zoom;
  const vx = Math.min(Math.max(uiState.panX, 0), Math.max(width - vw, 0));
  const vy = Math.min(Math.max(uiState.panY, 0), Math.max(height - vh, 0));

  const overlay = svg("svg", {
    viewBox: `${vx} ${vy} ${vw} ${vh}`,
    class: "image-overlay",
    width: 640,
    height: Math.round((640 * height) / width),
    "data-role": "image-overlay",
  });
  overlay.append(arrowDefs());
  if (camera.image_url) {
    overlay.append(
      svg("image", { href: camera.image_url, x: 0, y: 0, width, height, preserveAspectRatio: "none" }),
    );
  } else {
    overlay.append(svg("rect", { x: 0, y: 0, width, height, class: "image-ground" }));
  }
  overlay.append(...residualLines(visible, scale, Math.max(1, 1.5 / uiState.zoom)));

  overlay.addEventListener("wheel", (event) => {
    event.preventDefault();
    const factor = (event as WheelEvent).deltaY < 0 ? 1.2 : 1 / 1.2;
    const zoom = Math.min(Math.max(uiState.zoom * factor, 1), 64);
    // Keep the view center fixed while zooming.
    const cx = vx + vw / 2;
    const cy = vy + vh / 2;
    uiState.zoom = zoom;
    uiState.panX = cx - width / zoom / 2;
    uiState.panY = cy - height / zoom / 2;
    rerender();
  });

  const header = el("header", { class: "image-header" }, [
    el("h2", {}, [cameraId]),
    el("span", { class: "muted", "data-role": "image-count" }, [
      `showing ${visible.length} of ${allForCamera.length} residuals in this image; wheel to zoom`,
    ]),
  ]);

  const cards = buildTrackCards(visible);
  const shown = uiState.showAllCards ? cards : cards.slice(0, 12);
  const rail = el("div", { class: "track-rail", "data-role": "track-cards" });
  for (const card of shown) {
    const cardEl = el("article", {
      class: card.flagged ? "track-card flagged" : "track-card",
      "data-track-id": card.trackId,
      "data-flagged": String(card.flagged),
    });
    if (card.flagged) {
      cardEl.append(el("span", { class: "flag-badge", "data-role": "flag" }, ["flagged"]));
    }
    cardEl.append(el("h4", {}, [card.trackId]));
    cardEl.append(cropSvg(card, scale));
    cardEl.append(el("p", { class: "muted" }, [`max residual ${fmt(card.maxShown, 3)} px`]));
    const deleteButton = el("button", { type: "button", "data-role": "delete-track" }, [
      "Delete track",
    ]) as HTMLButtonElement;
    deleteButton.disabled = store.busy();
    deleteButton.addEventListener("click", (event) => {
      event.stopPropagation();
      void store
        .deleteTrack(card.trackId)
        .then(() => {
          store.lastError = null;
        })
        .catch((err) => {
          store.lastError = String(err instanceof Error ? err.message : err);
        });
    });
    cardEl.append(deleteButton);
    cardEl.addEventListener("click", () => store.openFrom("image", "track", card.trackId));
    rail.append(cardEl);
  }
  if (!uiState.showAllCards && cards.length > shown.length) {
    const more = el("button", { type: "button", class: "show-more" }, [
      `show all ${cards.length} tracks`,
    ]);
    more.addEventListener("click", () => {
      uiState.showAllCards = true;
      rerender();
    });
    rail.append(more);
  }

  root.append(header, el("div", { class: "image-body" }, [overlay, rail]));
  return root;
}
