/**
 * Application state: the view descriptor, the loaded documents, and the
 * transition rules between views.
 *
 * The filter travels with the store, not with any view, so it persists
 * across navigation; only loading a dataset resets it. Edits and optimizer
 * runs are serialized client-side as well as server-side: one job in
 * flight, controls disabled until it settles.
 */

import type {
  ApiClient,
  CompareDTO,
  ImageDetailDTO,
  ImageRowDTO,
  JobDTO,
  RecordDTO,
  SceneDTO,
  SessionDTO,
  StatsDTO,
} from "./api";
import type { FilterState } from "./filter";
import { applyFilter, defaultFilter, withFilter } from "./filter";

export type ViewName = "scene" | "image_grid" | "image" | "track";

/**
 * Click-through edges: which view a selection inside each view may open.
 * Scene selections open the clicked camera's image or the clicked point's
 * track; grid cards open their image; image track cards open their track.
 * The top tab bar is separate and may show any view directly.
 */
export const NAV_GRAPH: Readonly<Record<ViewName, readonly ViewName[]>> = {
  scene: ["image", "track"],
  image_grid: ["image"],
  image: ["track"],
  track: [],
};

export interface ViewState {
  activeView: ViewName;
  selectedCameraId: string | null;
  selectedTrackId: string | null;
  filter: FilterState;
  comparison: { a: string; b: string } | null;
}

export type Listener = () => void;

export class AppStore {
  view: ViewState = {
    activeView: "scene",
    selectedCameraId: null,
    selectedTrackId: null,
    filter: defaultFilter(),
    comparison: null,
  };

  session: SessionDTO | null = null;
  scene: SceneDTO | null = null;
  images: ImageRowDTO[] = [];
  records: RecordDTO[] = [];
  stats: StatsDTO | null = null;
  comparisonReport: CompareDTO | null = null;
  job: JobDTO | null = null;
  lastError: string | null = null;

  /** Bumped whenever the snapshot documents are refetched; views drop caches on it. */
  snapshotEpoch = 0;

  private summaries = new Map<string, ImageDetailDTO>();
  private listeners = new Set<Listener>();
  private jobActive = false;

  constructor(
    readonly api: ApiClient,
    private readonly pollIntervalMs: number = 250,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  // -- loading --------------------------------------------------------------

  /** Open (or reopen) the dataset. This is the only action that resets the filter. */
  async loadDataset(): Promise<void> {
    this.view = {
      activeView: "scene",
      selectedCameraId: null,
      selectedTrackId: null,
      filter: defaultFilter(),
      comparison: null,
    };
    this.comparisonReport = null;
    await this.refreshSnapshot();
  }

  /** Refetch every document after an edit or a finished run; keeps the filter. */
  async refreshSnapshot(): Promise<void> {
    this.snapshotEpoch += 1;
    this.summaries.clear();
    const [session, scene, images, records] = await Promise.all([
      this.api.getSession(),
      this.api.getScene(),
      this.api.getImages(),
      this.api.getRecords(),
    ]);
    this.session = session;
    this.scene = scene;
    this.images = images.images;
    this.records = records.records;
    await this.refreshStats();
  }

  async refreshStats(): Promise<void> {
    this.stats = await this.api.getStats(this.view.filter);
    this.emit();
  }

  async imageDetail(cameraId: string): Promise<ImageDetailDTO> {
    const cached = this.summaries.get(cameraId);
    if (cached) return cached;
    const detail = await this.api.getImage(cameraId);
    this.summaries.set(cameraId, detail);
    return detail;
  }

  // -- filtering --------------------------------------------------------------

  /** Update the shared filter; it stays in force across every view. */
  async setFilter(patch: Partial<FilterState>): Promise<void> {
    this.view = { ...this.view, filter: withFilter(this.view.filter, patch) };
    this.emit();
    await this.refreshStats();
  }

  /** Records passing the current filter, the set every view draws from. */
  visibleRecords(): RecordDTO[] {
    return applyFilter(this.records, this.view.filter);
  }

  // -- navigation -------------------------------------------------------------

  /** Direct tab navigation; any view is reachable from the tab bar. */
  navigateTab(view: ViewName): void {
    this.view = { ...this.view, activeView: view };
    this.emit();
  }

  /**
   * Click-through navigation from inside a view. Only the documented edges
   * exist; anything else is a programming error and throws.
   */
  openFrom(from: ViewName, to: ViewName, id: string): void {
    if (!NAV_GRAPH[from].includes(to)) {
      throw new Error(`no navigation edge ${from} -> ${to}`);
    }
    this.view = {
      ...this.view,
      activeView: to,
      selectedCameraId: to === "image" ? id : this.view.selectedCameraId,
      selectedTrackId: to === "track" ? id : this.view.selectedTrackId,
    };
    this.emit();
  }

  // -- mutations ----------------------------------------------------------------

  /** True while an edit or optimizer run is in flight; controls disable on it. */
  busy(): boolean {
    return this.jobActive;
  }

  async deleteTrack(trackId: string): Promise<void> {
    if (this.jobActive) throw new Error("another edit or run is in flight");
    this.jobActive = true;
    this.emit();
    try {
      await this.api.deleteTrack(trackId);
      await this.refreshSnapshot();
    } finally {
      this.jobActive = false;
      this.emit();
    }
  }

  async deleteCamera(cameraId: string): Promise<void> {
    if (this.jobActive) throw new Error("another edit or run is in flight");
    this.jobActive = true;
    this.emit();
    try {
      await this.api.deleteCamera(cameraId);
      await this.refreshSnapshot();
    } finally {
      this.jobActive = false;
      this.emit();
    }
  }

  /**
   * Start an optimizer run and poll it to a terminal state. On completion
   * the snapshot refreshes and, when a previous run exists, the comparison
   * pair is set to (previous, new) and its report fetched.
   */
  async runOptimizer(config?: Record<string, unknown>): Promise<JobDTO> {
    if (this.jobActive) throw new Error("another edit or run is in flight");
    this.jobActive = true;
    const previousRun = this.session?.runs.at(-1)?.id ?? null;
    try {
      this.job = await this.api.startRun(config);
      this.emit();
      while (this.job.state === "queued" || this.job.state === "running") {
        await sleep(this.pollIntervalMs);
        this.job = await this.api.getJob(this.job.job_id);
        this.emit();
      }
      if (this.job.state === "done") {
        await this.refreshSnapshot();
        const newRun = this.job.result_ref;
        if (previousRun && newRun) {
          await this.compareRuns(previousRun, newRun);
        }
      } else if (this.job.state === "failed") {
        this.lastError = this.job.error ?? "optimizer run failed";
      }
      return this.job;
    } finally {
      this.jobActive = false;
      this.emit();
    }
  }

  async cancelRun(): Promise<void> {
    if (this.job && (this.job.state === "queued" || this.job.state === "running")) {
      await this.api.cancelJob(this.job.job_id);
    }
  }

  async compareRuns(a: string, b: string): Promise<CompareDTO> {
    this.comparisonReport = await this.api.compareRuns(a, b);
    this.view = { ...this.view, comparison: { a, b } };
    this.emit();
    return this.comparisonReport;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
