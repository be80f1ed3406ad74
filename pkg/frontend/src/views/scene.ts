/**
 * Scene view: camera frustums and track points in an orbiting 3D viewport,
 * with the histogram and radial charts for the current filter beside it.
 * Clicking a frustum opens that camera's image view; clicking a point opens
 * its track view.
 */

import type { ScenePointDTO } from "../api";
import { kindColor } from "../palette";
import type { Orbit, Vec3 } from "../projection";
import { defaultOrbit, fitViewport, frustumPoints, project } from "../projection";
import type { AppStore } from "../store";
import { el, svg } from "../svg";
import { histogramChart, radialChart } from "../widgets/charts";

const WIDTH = 640;
const HEIGHT = 460;

interface SceneUiState {
  orbit: Orbit;
  showFrustums: boolean;
  showPoints: boolean;
}

const uiState: SceneUiState = {
  orbit: defaultOrbit(),
  showFrustums: true,
  showPoints: true,
};

export function resetSceneView(): void {
  uiState.orbit = defaultOrbit();
  uiState.showFrustums = true;
  uiState.showPoints = true;
}

function pointPosition(point: ScenePointDTO, kind: "initial" | "final"): Vec3 | null {
  return kind === "final" ? point.final : point.initial;
}

export function renderSceneView(store: AppStore, rerender: () => void): HTMLElement {
  const root = el("section", { class: "view view-scene", "data-view": "scene" });
  const scene = store.scene;
  if (!scene || (scene.cameras.length === 0 && scene.points.length === 0)) {
    root.append(el("p", { class: "placeholder" }, ["No dataset loaded or the dataset is empty."]));
    return root;
  }

  const kinds = store.view.filter.kinds;
  const cloud: Vec3[] = [];
  for (const camera of scene.cameras) {
    const pose = camera.pose_final ?? camera.pose_initial;
    if (pose) cloud.push(pose.center);
  }
  for (const point of scene.points) {
    if (point.initial) cloud.push(point.initial);
    if (point.final) cloud.push(point.final);
  }
  const viewport = fitViewport(cloud, WIDTH, HEIGHT, uiState.orbit);

  const canvas = svg("svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    width: WIDTH,
    height: HEIGHT,
    class: "scene-canvas",
    tabindex: 0,
    "data-role": "scene-canvas",
  });

  if (uiState.showPoints) {
    for (const point of scene.points) {
      for (const kind of ["initial", "final"] as const) {
        if (!kinds.has(kind)) continue;
        const position = pointPosition(point, kind);
        if (!position) continue;
        const [x, y] = project(viewport, position);
        const dot = svg("circle", {
          cx: x,
          cy: y,
          r: kind === "final" ? 2.2 : 1.7,
          fill: kindColor(kind),
          "fill-opacity": 0.8,
          class: `scene-point scene-point-${kind}`,
          "data-track-id": point.id,
        });
        dot.addEventListener("click", () => store.openFrom("scene", "track", point.id));
        dot.append(svg("title", {}, [`${point.id} (${point.n_observations} observations)`]));
        canvas.append(dot);
      }
    }
  }

  if (uiState.showFrustums) {
    for (const camera of scene.cameras) {
      for (const kind of ["initial", "final"] as const) {
        if (!kinds.has(kind)) continue;
        const pose = kind === "final" ? camera.pose_final : camera.pose_initial;
        if (!pose) continue;
        const depth = viewport.extent * 0.16;
        const [apex, ...corners] = frustumPoints(camera, pose, depth).map((p) =>
          project(viewport, p),
        );
        const path = corners
          .map((corner) => `M ${apex![0]} ${apex![1]} L ${corner[0]} ${corner[1]}`)
          .join(" ");
        const rim = corners.map(([x, y]) => `${x},${y}`).join(" ");
        const group = svg("g", {
          class: `scene-frustum scene-frustum-${kind}`,
          "data-camera-id": camera.id,
        });
        group.append(
          svg("path", { d: path, stroke: kindColor(kind), fill: "none", "stroke-opacity": 0.8 }),
          svg("polygon", {
            points: rim,
            stroke: kindColor(kind),
            fill: kindColor(kind),
            "fill-opacity": 0.12,
          }),
        );
        group.addEventListener("click", () => store.openFrom("scene", "image", camera.id));
        group.append(svg("title", {}, [camera.id]));
        canvas.append(group);
      }
    }
  }

  // Orbit with drag, zoom with wheel or +/-, arrows rotate, 0 resets.
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("mousedown", (event) => {
    dragging = true;
    lastX = (event as MouseEvent).clientX;
    lastY = (event as MouseEvent).clientY;
  });
  canvas.addEventListener("mousemove", (event) => {
    if (!dragging) return;
    const e = event as MouseEvent;
    uiState.orbit = {
      ...uiState.orbit,
      yawDeg: uiState.orbit.yawDeg + (e.clientX - lastX) * 0.5,
      pitchDeg: Math.max(-89, Math.min(89, uiState.orbit.pitchDeg + (e.clientY - lastY) * 0.5)),
    };
    lastX = e.clientX;
    lastY = e.clientY;
    rerender();
  });
  canvas.addEventListener("mouseup", () => {
    dragging = false;
  });
  canvas.addEventListener("wheel", (event) => {
    event.preventDefault();
    const factor = (event as WheelEvent).deltaY < 0 ? 1.12 : 1 / 1.12;
    uiState.orbit = { ...uiState.orbit, zoom: Math.max(0.05, uiState.orbit.zoom * factor) };
    rerender();
  });
  canvas.addEventListener("keydown", (event) => {
    const key = (event as KeyboardEvent).key;
    const step = 6;
    if (key === "ArrowLeft") uiState.orbit = { ...uiState.orbit, yawDeg: uiState.orbit.yawDeg - step };
    else if (key === "ArrowRight")
      uiState.orbit = { ...uiState.orbit, yawDeg: uiState.orbit.yawDeg + step };
    else if (key === "ArrowUp")
      uiState.orbit = {
        ...uiState.orbit,
        pitchDeg: Math.max(-89, uiState.orbit.pitchDeg - step),
      };
    else if (key === "ArrowDown")
      uiState.orbit = { ...uiState.orbit, pitchDeg: Math.min(89, uiState.orbit.pitchDeg + step) };
    else if (key === "+" || key === "=")
      uiState.orbit = { ...uiState.orbit, zoom: uiState.orbit.zoom * 1.12 };
    else if (key === "-") uiState.orbit = { ...uiState.orbit, zoom: uiState.orbit.zoom / 1.12 };
    else if (key === "0") uiState.orbit = defaultOrbit();
    else return;
    event.preventDefault();
    rerender();
  });

  const toggles = el("div", { class: "scene-toggles" });
  for (const [label, key] of [
    ["frustums", "showFrustums"],
    ["points", "showPoints"],
  ] as const) {
    const box = el("input", { type: "checkbox", "data-toggle": key }) as HTMLInputElement;
    box.checked = uiState[key];
    box.addEventListener("change", () => {
      uiState[key] = box.checked;
      rerender();
    });
    toggles.append(el("label", {}, [box, ` show ${label}`]));
  }

  const charts = el("div", { class: "scene-charts" });
  if (store.stats) {
    charts.append(
      el("figure", {}, [histogramChart(store.stats.histogram), el("figcaption", {}, ["residual lengths"])]),
      el("figure", {}, [radialChart(store.stats.radial), el("figcaption", {}, ["residual directions"])]),
    );
  }

  const help = el("p", { class: "muted scene-help" }, [
    "drag to orbit, wheel or +/- to zoom, arrows to rotate, 0 to reset; click a frustum for its image, a point for its track",
  ]);

  root.append(toggles, el("div", { class: "scene-body" }, [canvas, charts]), help);
  return root;
}
