/**
 * Chart widgets. Each draws exactly the numbers handed to it, which all
 * come from API documents; nothing here recomputes statistics.
 */

import type { HistogramDTO, RadialDTO, SlopePairDTO } from "../api";
import { NEUTRAL, PALETTE, kindColor } from "../palette";
import { fmt, svg } from "../svg";

export interface ChartSize {
  width: number;
  height: number;
}

const HIST_SIZE: ChartSize = { width: 220, height: 110 };
const RADIAL_SIZE: ChartSize = { width: 160, height: 160 };
const SLOPE_SIZE: ChartSize = { width: 160, height: 110 };

/** Residual length histogram: one bar per bin. */
export function histogramChart(hist: HistogramDTO, size: ChartSize = HIST_SIZE): SVGElement {
  const { width, height } = size;
  const root = svg("svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    class: "chart chart-histogram",
    role: "img",
  });
  const bins = hist.counts.length;
  if (bins === 0) return root;
  const peak = Math.max(1, ...hist.counts);
  const pad = 14;
  const barSpan = (width - 2 * pad) / bins;
  hist.counts.forEach((count, i) => {
    const h = ((height - 2 * pad) * count) / peak;
    root.append(
      svg("rect", {
        class: "hist-bar",
        x: pad + i * barSpan + 0.5,
        y: height - pad - h,
        width: Math.max(barSpan - 1, 0.5),
        height: h,
        fill: PALETTE.final,
        "data-count": count,
      }),
    );
  });
  const lo = hist.bin_edges[0] ?? 0;
  const hi = hist.bin_edges[hist.bin_edges.length - 1] ?? 0;
  root.append(
    svg("text", { x: pad, y: height - 2, class: "chart-label", fill: NEUTRAL.muted }, [fmt(lo, 2)]),
    svg(
      "text",
      { x: width - pad, y: height - 2, class: "chart-label", "text-anchor": "end", fill: NEUTRAL.muted },
      [fmt(hi, 2)],
    ),
  );
  return root;
}

/** Radial chart: residual vectors re-rooted at a shared origin. */
export function radialChart(radial: RadialDTO, size: ChartSize = RADIAL_SIZE): SVGElement {
  const { width, height } = size;
  const root = svg("svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    class: "chart chart-radial",
    role: "img",
  });
  const cx = width / 2;
  const cy = height / 2;
  const reach = Math.min(width, height) / 2 - 6;
  const radius = radial.max_radius > 0 ? radial.max_radius : 1;
  root.append(
    svg("circle", { cx, cy, r: reach, fill: "none", stroke: NEUTRAL.grid }),
    svg("line", { x1: cx - reach, y1: cy, x2: cx + reach, y2: cy, stroke: NEUTRAL.grid }),
    svg("line", { x1: cx, y1: cy - reach, x2: cx, y2: cy + reach, stroke: NEUTRAL.grid }),
  );
  for (const [x, y] of radial.endpoints) {
    root.append(
      svg("line", {
        class: "radial-spoke",
        x1: cx,
        y1: cy,
        x2: cx + (x / radius) * reach,
        y2: cy + (y / radius) * reach,
        stroke: PALETTE.final,
        "stroke-opacity": 0.55,
      }),
    );
  }
  root.append(
    svg(
      "text",
      { x: width - 4, y: 12, class: "chart-label", "text-anchor": "end", fill: NEUTRAL.muted },
      [`r=${fmt(radial.max_radius, 2)}`],
    ),
  );
  return root;
}

/**
 * Slope chart: each observation's pre-BA length on the left axis joined to
 * its post-BA length on the right axis. Falling segments are improvements.
 */
export function slopeChart(slopes: SlopePairDTO[], size: ChartSize = SLOPE_SIZE): SVGElement {
  const { width, height } = size;
  const root = svg("svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    class: "chart chart-slope",
    role: "img",
  });
  const pad = 12;
  const xPre = pad;
  const xPost = width - pad;
  const top = Math.max(1e-12, ...slopes.map((s) => Math.max(s.pre_length, s.post_length)));
  const y = (length: number) => height - pad - ((height - 2 * pad) * length) / top;
  root.append(
    svg("line", { x1: xPre, y1: pad, x2: xPre, y2: height - pad, stroke: NEUTRAL.grid }),
    svg("line", { x1: xPost, y1: pad, x2: xPost, y2: height - pad, stroke: NEUTRAL.grid }),
  );
  for (const pair of slopes) {
    root.append(
      svg("line", {
        class: "slope-segment",
        x1: xPre,
        y1: y(pair.pre_length),
        x2: xPost,
        y2: y(pair.post_length),
        stroke: pair.post_length <= pair.pre_length ? PALETTE.final : NEUTRAL.warn,
        "stroke-opacity": 0.7,
        "data-track": pair.track_id,
      }),
    );
    root.append(
      svg("circle", { cx: xPre, cy: y(pair.pre_length), r: 1.6, fill: kindColor("initial") }),
      svg("circle", { cx: xPost, cy: y(pair.post_length), r: 1.6, fill: kindColor("final") }),
    );
  }
  return root;
}
