/**
 * Run controls and the comparison readout. One edit or optimizer run at a
 * time: every mutating control disables while the store reports busy.
 */

import type { AppStore } from "../store";
import { el, fmt } from "../svg";

export function renderRunBar(store: AppStore): HTMLElement {
  const bar = el("div", { class: "run-bar", "data-widget": "run-bar" });

  const runButton = el("button", { type: "button", "data-role": "run-ba" }, [
    "Run optimizer",
  ]) as HTMLButtonElement;
  runButton.disabled = store.busy();
  runButton.addEventListener("click", () => {
    store.runOptimizer().catch((err) => {
      store.lastError = String(err instanceof Error ? err.message : err);
    });
  });
  bar.append(runButton);

  const reload = el("button", { type: "button", "data-role": "reload-dataset" }, [
    "Reload dataset",
  ]) as HTMLButtonElement;
  reload.disabled = store.busy();
  reload.title = "Reopen the dataset; this resets the filter";
  reload.addEventListener("click", () => {
    store.loadDataset().catch((err) => {
      store.lastError = String(err instanceof Error ? err.message : err);
    });
  });
  bar.append(reload);

  if (store.job) {
    const { state, progress } = store.job;
    const text =
      state === "running" || state === "queued"
        ? `${state}: iteration ${progress.iteration}, cost ${fmt(progress.cost, 6)}`
        : `last run ${state}`;
    bar.append(el("span", { class: "job-status", "data-role": "job-status" }, [text]));
    if (state === "running" || state === "queued") {
      const cancel = el("button", { type: "button", "data-role": "cancel-ba" }, ["Cancel"]);
      cancel.addEventListener("click", () => void store.cancelRun());
      bar.append(cancel);
    }
  }

  const runs = store.session?.runs ?? [];
  if (runs.length > 0) {
    const latest = runs[runs.length - 1]!;
    bar.append(
      el("span", { class: "run-summary" }, [
        `${runs.length} run(s); latest ${latest.id}: cost ${fmt(latest.initial_cost, 4)} -> ${fmt(
          latest.final_cost,
          4,
        )} in ${latest.iterations} iterations`,
      ]),
    );
  }

  const report = store.comparisonReport;
  if (report) {
    const improved = report.delta_rms < 0;
    const panel = el("div", { class: "compare-panel", "data-widget": "compare" }, [
      el("strong", {}, [`Comparison ${report.run_a} vs ${report.run_b}`]),
      el("span", { "data-role": "delta-rms", "data-improved": String(improved) }, [
        ` RMS change ${fmt(report.delta_rms, 6)} px over ${report.paired_observations} paired observations `,
      ]),
      el("span", { class: improved ? "good" : "bad" }, [
        improved ? "(improved)" : "(not improved)",
      ]),
    ]);
    if (report.removed_track_ids.length > 0) {
      panel.append(
        el("span", { class: "muted" }, [
          ` removed tracks: ${report.removed_track_ids.join(", ")}`,
        ]),
      );
    }
    bar.append(panel);
  }

  if (store.lastError) {
    bar.append(el("span", { class: "error-banner", "data-role": "error" }, [store.lastError]));
  }

  return bar;
}
