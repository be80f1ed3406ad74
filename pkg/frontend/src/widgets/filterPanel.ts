/**
 * The shared filter panel. It sits beside every view, edits the one
 * FilterState the store owns, and shows the client-side visible count next
 * to the server's count for the same filter; the two agreeing is the
 * cheapest live check that both sides filter identically.
 */

import type { ResidualKind } from "../filter";
import { LEGEND_LINES, PALETTE } from "../palette";
import type { AppStore } from "../store";
import { el } from "../svg";

function numberInput(
  label: string,
  value: string,
  onCommit: (raw: string) => void,
  attrs: Record<string, string | number> = {},
): HTMLElement {
  const input = el("input", { type: "text", value, class: "filter-input", ...attrs });
  input.addEventListener("change", () => onCommit(input.value.trim()));
  return el("label", { class: "filter-field" }, [label, input]);
}

export function renderFilterPanel(store: AppStore): HTMLElement {
  const f = store.view.filter;
  const panel = el("aside", { class: "filter-panel", "data-widget": "filter-panel" });

  panel.append(el("h2", {}, ["Filter"]));

  const commit = (patch: Parameters<AppStore["setFilter"]>[0]) => {
    store.setFilter(patch).catch((err) => {
      store.lastError = String(err instanceof Error ? err.message : err);
    });
  };

  const kindsRow = el("div", { class: "filter-kinds" });
  for (const kind of ["initial", "final"] as ResidualKind[]) {
    const box = el("input", { type: "checkbox", "data-kind": kind }) as HTMLInputElement;
    box.checked = f.kinds.has(kind);
    box.addEventListener("change", () => {
      const kinds = new Set(f.kinds);
      if (box.checked) kinds.add(kind);
      else kinds.delete(kind);
      commit({ kinds });
    });
    const swatch = el("span", { class: "swatch" });
    swatch.style.background = PALETTE[kind];
    kindsRow.append(el("label", { class: "filter-kind" }, [box, swatch, kind]));
  }
  panel.append(kindsRow);

  panel.append(
    numberInput("length min (px)", String(f.lengthRange[0]), (raw) => {
      commit({ lengthRange: [raw === "" ? 0 : Number(raw), f.lengthRange[1]] });
    }),
    numberInput(
      "length max (px, empty = none)",
      Number.isFinite(f.lengthRange[1]) ? String(f.lengthRange[1]) : "",
      (raw) => {
        commit({ lengthRange: [f.lengthRange[0], raw === "" ? Infinity : Number(raw)] });
      },
    ),
    numberInput("angle from (deg)", String(f.angleRange[0]), (raw) => {
      commit({ angleRange: [raw === "" ? 0 : Number(raw), f.angleRange[1]] });
    }),
    numberInput("angle to (deg, wraps; from = to means all)", String(f.angleRange[1]), (raw) => {
      commit({ angleRange: [f.angleRange[0], raw === "" ? 0 : Number(raw)] });
    }),
    numberInput("precision (decimal digits)", String(f.precision), (raw) => {
      commit({ precision: raw === "" ? 12 : Number(raw) });
    }),
    numberInput("scale (drawing only)", String(f.scale), (raw) => {
      commit({ scale: raw === "" ? 1 : Number(raw) });
    }),
  );

  const visible = store.visibleRecords().length;
  const total = store.records.length;
  const serverCount = store.stats ? String(store.stats.count) : "-";
  panel.append(
    el("p", { class: "filter-counts" }, [
      el("span", { "data-role": "visible-count" }, [String(visible)]),
      ` of ${total} residuals pass `,
      el("span", { class: "muted", "data-role": "server-count" }, [`(server: ${serverCount})`]),
    ]),
  );

  const reset = el("button", { class: "filter-reset", type: "button" }, ["Reset filter"]);
  reset.addEventListener("click", () => {
    commit({
      kinds: new Set<ResidualKind>(["initial", "final"]),
      lengthRange: [0, Infinity],
      angleRange: [0, 0],
      precision: 12,
      scale: 1,
    });
  });
  panel.append(reset);

  const legend = el("ul", { class: "legend" });
  for (const line of LEGEND_LINES) legend.append(el("li", {}, [line]));
  panel.append(el("h3", {}, ["Legend"]), legend);

  return panel;
}
