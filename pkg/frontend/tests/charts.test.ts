import { describe, expect, it } from "vitest";

import type { HeatmapResponse, HistogramResponse } from "../src/api.js";
import { cellColor, renderHeatmapSvg, renderHistogramSvg, renderLegendSvg } from "../src/charts.js";
import { buildHistogramView, suppressCells } from "../src/viewmodel.js";

const histogramResponse = (counts: number[], radii: number[]): HistogramResponse => ({
  table: "t",
  columns: ["x"],
  boundaries: Array.from({ length: counts.length + 1 }, (_, i) => i * 10),
  counts,
  radii,
  n_vars: counts.map(() => 2),
  null_count: 0,
  alpha: 0.99,
  epsilon: 1,
  total_epsilon: 1,
  policy_snapshot: "s",
  published: true,
});

describe("renderHistogramSvg", () => {
  it("emits one bar per bucket and whiskers carrying the radius", () => {
    const view = buildHistogramView(histogramResponse([100, 50], [10, 5]), 200);
    const svg = renderHistogramSvg(view, { width: 400, height: 200 });
    expect(svg.match(/class="bar"/g)).toHaveLength(2);
    expect(svg.match(/class="whisker"/g)).toHaveLength(2);
    expect(svg).toContain('data-radius="10"');
    expect(svg).toContain('data-radius="5"');
    expect(svg).toContain("<title>");
  });

  it("omits whiskers once they are sub-pixel", () => {
    const view = buildHistogramView(histogramResponse([1e6, 5e5], [1, 1]), 200);
    const svg = renderHistogramSvg(view, { width: 400, height: 200 });
    expect(svg).not.toContain('class="whisker"');
  });

  it("draws the CDF polyline when present", () => {
    const response = histogramResponse([10, 20], [1, 1]);
    response.cdf = { boundaries: response.boundaries, counts: [0, 10, 30], radii: [0, 1, 1], n_vars: [0, 1, 1] };
    const view = buildHistogramView(response, 200);
    const svg = renderHistogramSvg(view, { width: 400, height: 200 });
    expect(svg).toContain('class="cdf"');
  });
});

const heatmapResponse = (counts: number[][], radii: number[][]): HeatmapResponse => ({
  table: "t",
  columns: ["x", "y"],
  boundaries_x: [0, 1, 2],
  boundaries_y: [0, 1, 2],
  counts,
  radii,
  n_vars: counts.map((row) => row.map(() => 1)),
  null_count: 0,
  alpha: 0.99,
  epsilon: 1,
  total_epsilon: 1,
  policy_snapshot: "s",
  published: true,
});

describe("renderHeatmapSvg", () => {
  it("marks suppressed cells and colors the rest", () => {
    const view = suppressCells(heatmapResponse([[5, 80], [40, 2]], [[10, 10], [10, 10]]), 1);
    const svg = renderHeatmapSvg(view, { width: 200, height: 200 });
    expect(svg.match(/class="cell suppressed"/g)).toHaveLength(2);
    expect(svg.match(/class="cell" /g)).toHaveLength(2);
  });

  it("legend overlays the hovered cell's confidence interval", () => {
    const view = suppressCells(heatmapResponse([[50]], [[10]]), 1);
    const svg = renderLegendSvg(view, { width: 200, height: 40 }, { value: 40, radius: 10 });
    expect(svg).toContain('class="legend-ci"');
  });
});

describe("cellColor", () => {
  it("is fully white at whiteness 1 regardless of value", () => {
    expect(cellColor(100, 100, 1)).toBe("rgb(255,255,255)");
  });

  it("keeps saturation at whiteness 0", () => {
    expect(cellColor(100, 100, 0)).not.toBe("rgb(255,255,255)");
  });
});
