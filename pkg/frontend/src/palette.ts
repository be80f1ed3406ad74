/**
 * Two-tone residual palette, one hue per record kind.
 *
 * Blue and orange from the Okabe-Ito set: distinguishable under the common
 * forms of color vision deficiency and in grayscale print.
 */

export const PALETTE = {
  initial: "#0072b2",
  final: "#e69f00",
} as const;

export type PaletteKind = keyof typeof PALETTE;

export const NEUTRAL = {
  background: "#1d2126",
  panel: "#262b31",
  grid: "#3a4149",
  text: "#d7dce1",
  muted: "#8a939d",
  warn: "#d55e00",
} as const;

export function kindColor(kind: string): string {
  return kind === "final" ? PALETTE.final : PALETTE.initial;
}

/**
 * Legend copy shared by the views. The residual line convention (tail at
 * the measured tiepoint, arrowhead at the reprojection) and the flagging
 * rule live here so every view describes the same drawing.
 */
export const LEGEND_LINES = [
  "blue = initial residuals, orange = final residuals",
  "residual lines run tail at tiepoint, arrowhead at reprojection",
  "line length is magnified by the filter scale; membership never changes with scale",
  "flagged track card: max final residual at least 5x the image median",
] as const;
