/**
 * Store behavior: filter persistence across navigation, the navigation
 * graph, serialized mutations, and the client/server count agreement.
 */

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { applyFilter, defaultFilter, filterToJSON } from "../src/filter";
import { AppStore, NAV_GRAPH, type ViewName } from "../src/store";
import { FakeBackend, flush, loop } from "./fake";

let fake: FakeBackend;
let store: AppStore;

beforeEach(async () => {
  fake = new FakeBackend();
  store = new AppStore(new ApiClient(fake.fetch), 0);
  await store.loadDataset();
});

describe("loading", () => {
  it("pulls the full snapshot", () => {
    expect(store.session?.n_cameras).toBe(10);
    expect(store.scene?.cameras.length).toBe(10);
    expect(store.images.length).toBe(10);
    expect(store.records.length).toBe(loop.phase0.records.count);
    expect(store.stats?.count).toBe(loop.phase0.records.count);
  });

  it("agrees with the service on the unfiltered count", () => {
    expect(store.visibleRecords().length).toBe(store.stats?.count);
  });
});

describe("filter persistence", () => {
  it("keeps the filter across every navigation step", async () => {
    await store.setFilter({ kinds: new Set(["final"]), lengthRange: [0.2, 3], precision: 4 });
    const snapshot = filterToJSON(store.view.filter);

    store.navigateTab("image_grid");
    expect(filterToJSON(store.view.filter)).toEqual(snapshot);
    store.openFrom("image_grid", "image", loop.worst_camera);
    expect(filterToJSON(store.view.filter)).toEqual(snapshot);
    store.openFrom("image", "track", loop.flagged_track);
    expect(filterToJSON(store.view.filter)).toEqual(snapshot);
    store.navigateTab("scene");
    expect(filterToJSON(store.view.filter)).toEqual(snapshot);
  });

  it("resets only when the dataset is reloaded", async () => {
    await store.setFilter({ lengthRange: [1, 2] });
    expect(store.view.filter.lengthRange).toEqual([1, 2]);
    await store.loadDataset();
    expect(filterToJSON(store.view.filter)).toEqual(filterToJSON(defaultFilter()));
    expect(store.view.activeView).toBe("scene");
    expect(store.view.selectedCameraId).toBeNull();
    expect(store.view.selectedTrackId).toBeNull();
  });

  it("refetches stats when the filter changes", async () => {
    const before = fake.requests.filter((r) => r.includes("/api/stats")).length;
    await store.setFilter({ precision: 2 });
    const after = fake.requests.filter((r) => r.includes("/api/stats")).length;
    expect(after).toBe(before + 1);
  });
});

describe("navigation graph", () => {
  it("declares exactly the documented edges", () => {
    expect(NAV_GRAPH).toEqual({
      scene: ["image", "track"],
      image_grid: ["image"],
      image: ["track"],
      track: [],
    });
  });

  it("follows allowed edges and records the selection", () => {
    store.openFrom("scene", "image", "cam_003");
    expect(store.view.activeView).toBe("image");
    expect(store.view.selectedCameraId).toBe("cam_003");

    store.openFrom("image", "track", "trk_00007");
    expect(store.view.activeView).toBe("track");
    expect(store.view.selectedTrackId).toBe("trk_00007");
    expect(store.view.selectedCameraId).toBe("cam_003");
  });

  it("rejects undeclared edges", () => {
    const bad: [ViewName, ViewName][] = [
      ["track", "image"],
      ["track", "scene"],
      ["image_grid", "track"],
      ["image", "scene"],
      ["image", "image_grid"],
    ];
    for (const [from, to] of bad) {
      expect(() => store.openFrom(from, to, "x")).toThrow(/no navigation edge/);
    }
  });

  it("lets the tab bar reach any view directly", () => {
    for (const view of ["image_grid", "image", "track", "scene"] as ViewName[]) {
      store.navigateTab(view);
      expect(store.view.activeView).toBe(view);
    }
  });
});

describe("visible records", () => {
  it("is applyFilter over the loaded records", async () => {
    await store.setFilter({ kinds: new Set(["initial"]), angleRange: [45, 135] });
    const expected = applyFilter(store.records, store.view.filter);
    expect(store.visibleRecords()).toEqual(expected);
    expect(expected.length).toBeGreaterThan(0);
    expect(expected.length).toBeLessThan(store.records.length);
  });
});

describe("mutations", () => {
  it("serializes edits: a second mutation is rejected while one runs", async () => {
    const pending = store.deleteTrack(loop.flagged_track);
    expect(store.busy()).toBe(true);
    await expect(store.runOptimizer()).rejects.toThrow(/in flight/);
    await expect(store.deleteTrack("trk_00001")).rejects.toThrow(/in flight/);
    await pending;
    expect(store.busy()).toBe(false);
  });

  it("deleteTrack refreshes the snapshot and keeps the filter", async () => {
    await store.setFilter({ precision: 6 });
    const epochBefore = store.snapshotEpoch;
    await store.deleteTrack(loop.flagged_track);
    expect(store.snapshotEpoch).toBe(epochBefore + 1);
    expect(store.session?.has_result).toBe(false);
    expect(store.records.length).toBe(loop.edited.records.count);
    expect(store.view.filter.precision).toBe(6);
  });

  it("runOptimizer polls to done, refreshes, and fills the comparison", async () => {
    await store.deleteTrack(loop.flagged_track);
    const job = await store.runOptimizer();
    expect(job.state).toBe("done");
    expect(job.result_ref).toBe("run_001");
    expect(store.session?.current_run).toBe("run_001");
    expect(store.records.length).toBe(loop.phase1.records.count);
    expect(store.view.comparison).toEqual({ a: "run_000", b: "run_001" });
    expect(store.comparisonReport?.delta_rms).toBeLessThan(0);
    await flush();
    expect(store.busy()).toBe(false);
  });

  it("notifies subscribers on every state change", async () => {
    let calls = 0;
    const unsubscribe = store.subscribe(() => {
      calls += 1;
    });
    store.navigateTab("image_grid");
    await store.setFilter({ scale: 2 });
    expect(calls).toBeGreaterThanOrEqual(3);
    unsubscribe();
    const frozen = calls;
    store.navigateTab("scene");
    expect(calls).toBe(frozen);
  });
});
