/**
 * Application shell: the tab bar, the run bar, the filter panel, and the
 * active view, re-rendered from the store on every state change.
 */

import type { AppStore, ViewName } from "./store";
import { clear, el } from "./svg";
import { renderImageView, resetImageView } from "./views/image";
import { renderImageGridView, resetImageGridView } from "./views/imageGrid";
import { renderSceneView, resetSceneView } from "./views/scene";
import { renderTrackView, resetTrackView } from "./views/track";
import { renderFilterPanel } from "./widgets/filterPanel";
import { renderRunBar } from "./widgets/runBar";

const TABS: { view: ViewName; label: string }[] = [
  { view: "scene", label: "Scene" },
  { view: "image_grid", label: "Image grid" },
  { view: "image", label: "Image" },
  { view: "track", label: "Track" },
];

export function resetViewCaches(): void {
  resetSceneView();
  resetImageGridView();
  resetImageView();
  resetTrackView();
}

export function renderApp(store: AppStore, root: HTMLElement): void {
  clear(root);
  const rerender = () => renderApp(store, root);

  const tabs = el("nav", { class: "tab-bar", "data-widget": "tabs" });
  for (const tab of TABS) {
    const button = el(
      "button",
      {
        type: "button",
        class: store.view.activeView === tab.view ? "tab active" : "tab",
        "data-tab": tab.view,
      },
      [tab.label],
    );
    button.addEventListener("click", () => store.navigateTab(tab.view));
    tabs.append(button);
  }

  const title = el("div", { class: "app-title" }, [
    el("strong", {}, ["bundle adjustment review"]),
    store.session
      ? el("span", { class: "muted" }, [
          ` ${store.session.n_cameras} cameras, ${store.session.n_tracks} tracks, ${store.session.n_observations} observations`,
        ])
      : "",
  ]);

  const header = el("header", { class: "app-header" }, [title, tabs, renderRunBar(store)]);

  let view: HTMLElement;
  switch (store.view.activeView) {
    case "scene":
      view = renderSceneView(store, rerender);
      break;
    case "image_grid":
      view = renderImageGridView(store, rerender);
      break;
    case "image":
      view = renderImageView(store, rerender);
      break;
    case "track":
      view = renderTrackView(store, rerender);
      break;
  }

  const body = el("div", { class: "app-body" }, [renderFilterPanel(store), view]);
  root.append(header, body);
}

export function mountApp(store: AppStore, root: HTMLElement): () => void {
  const unsubscribe = store.subscribe(() => renderApp(store, root));
  renderApp(store, root);
  return unsubscribe;
}
