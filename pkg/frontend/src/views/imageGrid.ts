/**
 * Image grid: one card per image in a horizontal carousel, each with its
 * summary charts. Sorting calls the server's image ranking; card clicks
 * open the image view.
 */

import type { ImageDetailDTO, ImageScoreDTO } from "../api";
import type { AppStore } from "../store";
import { el, fmt } from "../svg";
import { histogramChart, radialChart, slopeChart } from "../widgets/charts";

export const IMAGE_SORT_KEYS = [
  "dataset order",
  "max_final_length",
  "mean_final_length",
  "delta_rms",
  "concentration",
] as const;

export type ImageSortKey = (typeof IMAGE_SORT_KEYS)[number];

interface GridUiState {
  sortKey: ImageSortKey;
  ranking: ImageScoreDTO[] | null;
  rankingKey: string | null;
  failedKey: string | null;
  summaries: Map<string, ImageDetailDTO | null>;
  note: string | null;
  epoch: number;
  storeEpoch: number;
}

const uiState: GridUiState = {
  sortKey: "dataset order",
  ranking: null,
  rankingKey: null,
  failedKey: null,
  summaries: new Map(),
  note: null,
  epoch: 0,
  storeEpoch: -1,
};

export function resetImageGridView(): void {
  uiState.sortKey = "dataset order";
  uiState.ranking = null;
  uiState.rankingKey = null;
  uiState.failedKey = null;
  uiState.summaries = new Map();
  uiState.note = null;
  uiState.epoch += 1;
}

function orderedCameraIds(store: AppStore): string[] {
  const datasetOrder = store.images.map((row) => row.camera_id);
  if (uiState.sortKey === "dataset order" || !uiState.ranking) return datasetOrder;
  const present = new Set(datasetOrder);
  const ranked = uiState.ranking
    .filter((score) => present.has(score.camera_id))
    .map((score) => score.camera_id);
  for (const id of datasetOrder) if (!ranked.includes(id)) ranked.push(id);
  return ranked;
}

async function ensureRanking(store: AppStore, rerender: () => void): Promise<void> {
  if (uiState.sortKey === "dataset order") return;
  if (uiState.rankingKey === uiState.sortKey && uiState.ranking) return;
  if (uiState.failedKey === uiState.sortKey) return; // do not hammer a failing route
  const epoch = uiState.epoch;
  try {
    const doc = await store.api.rankImages(uiState.sortKey);
    if (epoch !== uiState.epoch) return;
    uiState.ranking = doc.images;
    uiState.rankingKey = uiState.sortKey;
    uiState.failedKey = null;
    uiState.note = null;
  } catch (err) {
    if (epoch !== uiState.epoch) return;
    uiState.ranking = null;
    uiState.rankingKey = null;
    uiState.failedKey = uiState.sortKey;
    uiState.note = `ranking unavailable: ${err instanceof Error ? err.message : String(err)}`;
  }
  rerender();
}

async function ensureSummaries(store: AppStore, ids: string[], rerender: () => void): Promise<void> {
  const missing = ids.filter((id) => !uiState.summaries.has(id));
  if (missing.length === 0) return;
  const epoch = uiState.epoch;
  const details = await Promise.all(
    missing.map((id) => store.imageDetail(id).catch(() => null)),
  );
  if (epoch !== uiState.epoch) return;
  // Failures cache as null so a broken summary does not refetch forever.
  missing.forEach((id, i) => uiState.summaries.set(id, details[i] ?? null));
  rerender();
}

export function renderImageGridView(store: AppStore, rerender: () => void): HTMLElement {
  const root = el("section", { class: "view view-image-grid", "data-view": "image_grid" });

  if (uiState.storeEpoch !== store.snapshotEpoch) {
    // The snapshot changed under us (edit, rerun, reload): rankings and
    // summaries describe the old dataset, so drop them.
    uiState.ranking = null;
    uiState.rankingKey = null;
    uiState.summaries = new Map();
    uiState.note = null;
    uiState.epoch += 1;
    uiState.storeEpoch = store.snapshotEpoch;
  }

  if (store.images.length === 0) {
    root.append(el("p", { class: "placeholder" }, ["No images in the dataset."]));
    return root;
  }

  const sortRow = el("div", { class: "grid-sort" });
  const select = el("select", { "data-role": "image-sort" }) as HTMLSelectElement;
  for (const key of IMAGE_SORT_KEYS) {
    const option = el("option", { value: key }, [
      key === "dataset order" ? key : `worst ${key} first`,
    ]) as HTMLOptionElement;
    if (key === uiState.sortKey) option.selected = true;
    select.append(option);
  }
  select.addEventListener("change", () => {
    uiState.sortKey = select.value as ImageSortKey;
    uiState.ranking = null;
    uiState.rankingKey = null;
    rerender();
  });
  sortRow.append(el("label", {}, ["sort: ", select]));
  if (uiState.note) sortRow.append(el("span", { class: "muted" }, [uiState.note]));
  root.append(sortRow);

  void ensureRanking(store, rerender);

  const ids = orderedCameraIds(store);
  void ensureSummaries(store, ids, rerender);

  const scores = new Map<string, ImageScoreDTO>();
  for (const score of uiState.ranking ?? []) scores.set(score.camera_id, score);

  const carousel = el("div", { class: "card-carousel", "data-role": "image-cards" });
  const rows = new Map(store.images.map((row) => [row.camera_id, row]));
  ids.forEach((cameraId, position) => {
    const row = rows.get(cameraId);
    if (!row) return;
    const card = el("article", {
      class: "image-card",
      "data-camera-id": cameraId,
      "data-position": position,
    });
    card.append(el("h3", {}, [cameraId]));
    card.append(el("p", { class: "muted" }, [`${row.n_observations} observations`]));
    const score = scores.get(cameraId);
    if (score && uiState.sortKey !== "dataset order") {
      card.append(
        el("p", { class: "card-score" }, [
          `${uiState.sortKey}: ${fmt(score[uiState.sortKey as keyof ImageScoreDTO] as number, 4)}`,
        ]),
      );
    }
    const detail = uiState.summaries.get(cameraId);
    if (detail) {
      card.append(
        el("div", { class: "card-charts" }, [
          histogramChart(detail.summary.histogram, { width: 150, height: 80 }),
          radialChart(detail.summary.radial, { width: 80, height: 80 }),
          slopeChart(detail.summary.slopes, { width: 110, height: 80 }),
        ]),
      );
    } else {
      card.append(
        el("p", { class: "muted" }, [
          uiState.summaries.has(cameraId) ? "charts unavailable" : "loading charts",
        ]),
      );
    }
    card.addEventListener("click", () => store.openFrom("image_grid", "image", cameraId));
    carousel.append(card);
  });
  root.append(carousel);
  return root;
}
