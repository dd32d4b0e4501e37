/** SVG markup rendering for histogram and heatmap views.
 *
 *  Pure string generation (no DOM dependency) so geometry is unit-testable;
 *  the app layer injects the markup and wires pointer events on top.
 */

import type { HeatmapViewModel, HistogramViewModel } from "./viewmodel.js";

export interface ChartOptions {
  width: number;
  height: number;
  margin?: number;
}

const esc = (text: string): string =>
  text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

const fmt = (x: number): string => (Math.abs(x - Math.round(x)) < 1e-9 ? String(Math.round(x)) : x.toFixed(2));

export function renderHistogramSvg(view: HistogramViewModel, opts: ChartOptions): string {
  const margin = opts.margin ?? 24;
  const plotWidth = opts.width - 2 * margin;
  const plotHeight = view.pixelHeight;
  const n = view.bars.length;
  const slot = plotWidth / Math.max(1, n);
  const barWidth = slot * 0.86;
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${opts.width}" height="${plotHeight + 2 * margin}" ` +
      `data-plot-width="${plotWidth}" data-plot-left="${margin}" class="histogram-chart">`,
  );
  parts.push(`<g transform="translate(${margin},${margin})">`);
  parts.push(`<line x1="0" y1="${plotHeight}" x2="${plotWidth}" y2="${plotHeight}" class="axis"/>`);
  parts.push(`<text x="-6" y="8" class="ymax-label" text-anchor="end">${fmt(view.yMax)}</text>`);
  view.bars.forEach((bar, i) => {
    const x = i * slot + (slot - barWidth) / 2;
    const top = plotHeight - bar.pixelHeight;
    parts.push(
      `<rect class="bar" data-index="${i}" x="${x.toFixed(2)}" y="${top.toFixed(2)}" ` +
        `width="${barWidth.toFixed(2)}" height="${bar.pixelHeight.toFixed(2)}">` +
        `<title>${esc(`${bar.label}: ${bar.tooltip}`)}</title></rect>`,
    );
    // Whiskers spanning value +/- radius; skip when the span is sub-pixel
    // (high-epsilon releases look exactly like the raw chart).
    const span = bar.whiskerHighPx - bar.whiskerLowPx;
    if (span >= 1) {
      const cx = x + barWidth / 2;
      const yLow = plotHeight - bar.whiskerLowPx;
      const yHigh = plotHeight - bar.whiskerHighPx;
      const cap = barWidth * 0.3;
      parts.push(
        `<g class="whisker" data-index="${i}" data-radius="${bar.radius}">` +
          `<line x1="${cx.toFixed(2)}" y1="${yLow.toFixed(2)}" x2="${cx.toFixed(2)}" y2="${yHigh.toFixed(2)}"/>` +
          `<line x1="${(cx - cap).toFixed(2)}" y1="${yLow.toFixed(2)}" x2="${(cx + cap).toFixed(2)}" y2="${yLow.toFixed(2)}"/>` +
          `<line x1="${(cx - cap).toFixed(2)}" y1="${yHigh.toFixed(2)}" x2="${(cx + cap).toFixed(2)}" y2="${yHigh.toFixed(2)}"/>` +
          `</g>`,
      );
    }
  });
  if (view.cdf) {
    const cdfMax = Math.max(1e-9, ...view.cdf.display);
    const points = view.cdf.display
      .map((value, i) => {
        const x = (i / Math.max(1, view.cdf!.display.length - 1)) * plotWidth;
        const y = plotHeight - (Math.max(0, value) / cdfMax) * plotHeight;
        return `${x.toFixed(2)},${y.toFixed(2)}`;
      })
      .join(" ");
    parts.push(`<polyline class="cdf" fill="none" points="${points}"/>`);
  }
  parts.push("</g></svg>");
  return parts.join("");
}

/** Simple two-stop color ramp washed toward white by the cell's uncertainty. */
export function cellColor(value: number, maxValue: number, whiteness: number): string {
  const t = maxValue > 0 ? Math.max(0, Math.min(1, value / maxValue)) : 0;
  const base = {
    r: Math.round(28 + t * (224 - 28)),
    g: Math.round(60 + t * (152 - 60)),
    b: Math.round(120 - t * 100),
  };
  const mix = (channel: number) => Math.round(channel + (255 - channel) * whiteness);
  return `rgb(${mix(base.r)},${mix(base.g)},${mix(base.b)})`;
}

export function renderHeatmapSvg(view: HeatmapViewModel, opts: ChartOptions): string {
  const margin = opts.margin ?? 24;
  const nx = view.cells.length;
  const ny = nx > 0 ? view.cells[0].length : 0;
  const plotWidth = opts.width - 2 * margin;
  const plotHeight = opts.height - 2 * margin;
  const cw = plotWidth / Math.max(1, nx);
  const ch = plotHeight / Math.max(1, ny);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${opts.width}" height="${opts.height}" class="heatmap-chart">`,
  );
  parts.push(`<g transform="translate(${margin},${margin})">`);
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      const cell = view.cells[i][j];
      const x = i * cw;
      const y = plotHeight - (j + 1) * ch;
      if (cell.suppressed) {
        parts.push(
          `<rect class="cell suppressed" data-x="${i}" data-y="${j}" x="${x.toFixed(2)}" y="${y.toFixed(2)}" ` +
            `width="${cw.toFixed(2)}" height="${ch.toFixed(2)}">` +
            `<title>suppressed (count below its ${fmt(view.alpha * 100)}% confidence radius)</title></rect>`,
        );
        continue;
      }
      const fill = cellColor(cell.value, view.maxValue, cell.whiteness);
      parts.push(
        `<rect class="cell" data-x="${i}" data-y="${j}" data-radius="${cell.radius}" ` +
          `x="${x.toFixed(2)}" y="${y.toFixed(2)}" width="${cw.toFixed(2)}" height="${ch.toFixed(2)}" fill="${fill}">` +
          `<title>${esc(`${fmt(cell.value)} ± ${fmt(cell.radius)}`)}</title></rect>`,
      );
    }
  }
  parts.push("</g></svg>");
  return parts.join("");
}

/** Color legend with an optional confidence-interval overlay for one cell:
 *  hovering a heatmap cell highlights [value-radius, value+radius] on the
 *  legend gradient. */
export function renderLegendSvg(
  view: HeatmapViewModel,
  opts: ChartOptions,
  highlight?: { value: number; radius: number },
): string {
  const margin = opts.margin ?? 12;
  const width = opts.width - 2 * margin;
  const steps = 24;
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${opts.width}" height="${opts.height}" class="heatmap-legend">`,
  );
  parts.push(`<g transform="translate(${margin},8)">`);
  const stepWidth = width / steps;
  for (let s = 0; s < steps; s++) {
    const value = (s / (steps - 1)) * view.maxValue;
    parts.push(
      `<rect x="${(s * stepWidth).toFixed(2)}" y="0" width="${stepWidth.toFixed(2)}" height="12" ` +
        `fill="${cellColor(value, view.maxValue, 0)}"/>`,
    );
  }
  parts.push(`<text x="0" y="32" class="legend-label">0</text>`);
  parts.push(`<text x="${width}" y="32" text-anchor="end" class="legend-label">${fmt(view.maxValue)}</text>`);
  if (highlight && view.maxValue > 0) {
    const clamp = (v: number) => Math.max(0, Math.min(view.maxValue, v));
    const x0 = (clamp(highlight.value - highlight.radius) / view.maxValue) * width;
    const x1 = (clamp(highlight.value + highlight.radius) / view.maxValue) * width;
    parts.push(
      `<rect class="legend-ci" x="${x0.toFixed(2)}" y="-3" width="${Math.max(1, x1 - x0).toFixed(2)}" ` +
        `height="18" fill="none" stroke-dasharray="3,2"/>`,
    );
  }
  parts.push("</g></svg>");
  return parts.join("");
}
