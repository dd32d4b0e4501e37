/** Pure view-model transforms between service responses and chart geometry.
 *
 *  Noisy counts arrive as raw reals (possibly negative); display rules live
 *  here so they are testable without a DOM: negative bars render at zero
 *  height but keep their honest interval in the tooltip, CDFs get a
 *  client-side running-max clamp, low-confidence heatmap cells are
 *  suppressed or whitened.
 */

import type { Boundary, HeatmapResponse, HistogramResponse, PolicyDocument } from "./api.js";

export interface HistogramBar {
  label: string;
  value: number;
  radius: number;
  lower: number;
  upper: number;
  /** Bar height in pixels after rescaling the y-axis to the maximum displayed value. */
  pixelHeight: number;
  whiskerLowPx: number;
  whiskerHighPx: number;
  tooltip: string;
}

export interface HistogramViewModel {
  bars: HistogramBar[];
  yMax: number;
  pixelHeight: number;
  /** Smallest epsilon at which one noise term stays sub-pixel (display hint). */
  subPixelWhiskers: boolean;
  cdf?: { raw: number[]; display: number[]; radii: number[] };
}

export interface HeatmapCell {
  value: number;
  radius: number;
  suppressed: boolean;
  whiteness: number;
}

export interface HeatmapViewModel {
  cells: HeatmapCell[][];
  maxValue: number;
  suppressedCount: number;
  alpha: number;
}

export interface PolicyEditorState {
  draft: PolicyDocument;
  published: boolean;
  lastSnapshot: string | null;
  stale: boolean;
}

const formatValue = (x: number): string => (Number.isInteger(x) ? String(x) : x.toFixed(2));

export function bucketLabel(boundaries: Boundary[], index: number): string {
  return `[${boundaries[index]}, ${boundaries[index + 1]})`;
}

/** Running-max clamp making the displayed CDF nondecreasing; raw values stay
 *  available for tooltips. */
export function clampCdf(values: number[]): number[] {
  const out: number[] = [];
  let running = -Infinity;
  for (const value of values) {
    running = Math.max(running, value);
    out.push(running);
  }
  return out;
}

export function buildHistogramView(response: HistogramResponse, pixelHeight: number): HistogramViewModel {
  // Rescale the y-axis to the maximum displayed value (bar or whisker top).
  let yMax = 1e-9;
  for (let i = 0; i < response.counts.length; i++) {
    yMax = Math.max(yMax, response.counts[i] + response.radii[i]);
  }
  const perPixel = yMax / pixelHeight;
  const toPx = (value: number) => Math.min(pixelHeight, Math.max(0, value / perPixel));
  const bars = response.counts.map((value, i) => {
    const radius = response.radii[i];
    const lower = value - radius;
    const upper = value + radius;
    return {
      label: bucketLabel(response.boundaries, i),
      value,
      radius,
      lower,
      upper,
      pixelHeight: value <= 0 ? 0 : toPx(value),
      whiskerLowPx: toPx(lower),
      whiskerHighPx: toPx(upper),
      tooltip: `${formatValue(value)} ± ${formatValue(radius)}  [${formatValue(lower)}, ${formatValue(upper)}]`,
    };
  });
  const subPixelWhiskers = bars.every((bar) => bar.whiskerHighPx - bar.whiskerLowPx < 1);
  const view: HistogramViewModel = { bars, yMax, pixelHeight, subPixelWhiskers };
  if (response.cdf) {
    view.cdf = {
      raw: response.cdf.counts.slice(),
      display: clampCdf(response.cdf.counts),
      radii: response.cdf.radii.slice(),
    };
  }
  return view;
}

/** Uncertainty as extra whiteness: 0 = fully saturated, 1 = fully washed out. */
export function whiteness(value: number, confidenceRadius: number): number {
  if (confidenceRadius < 0) throw new RangeError("confidence radius must be >= 0");
  if (confidenceRadius === 0) return 0;
  return confidenceRadius / (Math.abs(value) + confidenceRadius);
}

/** Hide cells whose count is below `factor` times their confidence radius. */
export function suppressCells(response: HeatmapResponse, factor = 1): HeatmapViewModel {
  if (!(factor > 0)) throw new RangeError("suppression factor must be positive");
  let maxValue = 0;
  let suppressedCount = 0;
  const cells = response.counts.map((row, i) =>
    row.map((value, j) => {
      const radius = response.radii[i][j];
      const suppressed = value < factor * radius;
      if (suppressed) suppressedCount += 1;
      else maxValue = Math.max(maxValue, value);
      return { value, radius, suppressed, whiteness: whiteness(value, radius) };
    }),
  );
  return { cells, maxValue, suppressedCount, alpha: response.alpha };
}

/** Linear pixel-to-value mapping for a zoom selection on a numeric axis.
 *  Returns the boundaries of the requery, or null for a degenerate (<2 px)
 *  selection. */
export function zoomSelection(
  boundaries: number[],
  pixelRange: [number, number],
  plotWidth: number,
  bucketCount: number,
): number[] | null {
  const [rawA, rawB] = pixelRange;
  const x0 = Math.max(0, Math.min(rawA, rawB));
  const x1 = Math.min(plotWidth, Math.max(rawA, rawB));
  if (x1 - x0 < 2) return null;
  const lo = boundaries[0];
  const hi = boundaries[boundaries.length - 1];
  const v0 = lo + (x0 / plotWidth) * (hi - lo);
  const v1 = lo + (x1 / plotWidth) * (hi - lo);
  const out: number[] = [];
  for (let i = 0; i <= bucketCount; i++) {
    out.push(v0 + ((v1 - v0) * i) / bucketCount);
  }
  return out;
}

/** Categorical axes snap the selection to existing bucket edges. */
export function zoomSelectionCategorical(
  boundaries: string[],
  pixelRange: [number, number],
  plotWidth: number,
): string[] | null {
  const edges = boundaries.length - 1;
  const [rawA, rawB] = pixelRange;
  const x0 = Math.max(0, Math.min(rawA, rawB));
  const x1 = Math.min(plotWidth, Math.max(rawA, rawB));
  if (x1 - x0 < 2) return null;
  const first = Math.round((x0 / plotWidth) * edges);
  const last = Math.round((x1 / plotWidth) * edges);
  if (last - first < 1) return null;
  return boundaries.slice(first, last + 1);
}

export function newEditorState(draft: PolicyDocument): PolicyEditorState {
  return { draft, published: draft.published, lastSnapshot: null, stale: false };
}

export function editorAfterPreview(state: PolicyEditorState, snapshot: string): PolicyEditorState {
  return { ...state, lastSnapshot: snapshot, stale: false };
}

/** A preview chart is stale when its snapshot no longer matches the policy
 *  the service answered with (someone edited in between). */
export function detectStalePreview(state: PolicyEditorState, responseSnapshot: string): PolicyEditorState {
  const stale = state.lastSnapshot !== null && state.lastSnapshot !== responseSnapshot;
  return stale === state.stale ? state : { ...state, stale };
}

/** Publishing latches the editor read-only. */
export function editorAfterPublish(state: PolicyEditorState): PolicyEditorState {
  return { ...state, published: true, draft: { ...state.draft, published: true } };
}

export function editorControlsDisabled(state: PolicyEditorState): boolean {
  return state.published;
}

export function setDraftEpsilon(state: PolicyEditorState, columnSetId: number, epsilon: number): PolicyEditorState {
  if (state.published) throw new Error("policy is published; the editor is read-only");
  if (!(epsilon > 0)) throw new RangeError("epsilon must be positive");
  const column_sets = state.draft.column_sets.map((entry) =>
    entry.id === columnSetId ? { ...entry, epsilon } : entry,
  );
  return { ...state, draft: { ...state.draft, column_sets } };
}
