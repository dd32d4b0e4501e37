/** Single-page app wiring: one analyst chart panel plus the curator editor.
 *
 *  Interaction model: every gesture (zoom, bucket change, epsilon edit)
 *  issues a fresh query; in-flight responses are dropped unless they carry
 *  the latest sequence number for their chart.
 */

import {
  Boundary,
  HistogramResponse,
  PolicyDocument,
  ServiceClient,
  ServiceError,
} from "./api.js";
import { renderHeatmapSvg, renderHistogramSvg, renderLegendSvg } from "./charts.js";
import {
  PolicyEditorState,
  buildHistogramView,
  detectStalePreview,
  editorAfterPreview,
  editorAfterPublish,
  editorControlsDisabled,
  newEditorState,
  setDraftEpsilon,
  suppressCells,
  zoomSelection,
} from "./viewmodel.js";

const PIXEL_HEIGHT = 280;
const DEFAULT_BUCKETS = 20;

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

class HistogramPanel {
  private sequence = 0;
  private boundaries: number[] = [];
  private column = "";

  constructor(
    private readonly app: App,
    private readonly container: HTMLElement,
    private readonly status: HTMLElement,
  ) {
    // Mouse-drag zoom: select an interval, requery at the same bucket count.
    let dragStart: number | null = null;
    container.addEventListener("mousedown", (event) => {
      dragStart = event.offsetX;
    });
    container.addEventListener("mouseup", (event) => {
      if (dragStart === null) return;
      const svg = container.querySelector("svg.histogram-chart");
      if (svg && this.boundaries.length >= 2) {
        const plotWidth = Number(svg.getAttribute("data-plot-width"));
        const left = Number(svg.getAttribute("data-plot-left"));
        const next = zoomSelection(
          this.boundaries,
          [dragStart - left, event.offsetX - left],
          plotWidth,
          this.boundaries.length - 1,
        );
        if (next) void this.load(this.column, next);
      }
      dragStart = null;
    });
  }

  async load(column: string, boundaries: number[]): Promise<void> {
    this.column = column;
    this.boundaries = boundaries;
    const seq = ++this.sequence;
    this.status.textContent = "querying…";
    try {
      const response = await this.app.client().histogram(this.app.table, {
        column,
        boundaries,
        include_cdf: true,
      });
      if (seq !== this.sequence) return; // a newer query superseded this one
      this.render(response);
    } catch (error) {
      if (seq !== this.sequence) return;
      this.status.textContent = describe(error);
    }
  }

  private render(response: HistogramResponse): void {
    const view = buildHistogramView(response, PIXEL_HEIGHT);
    this.container.innerHTML = renderHistogramSvg(view, { width: 680, height: PIXEL_HEIGHT });
    this.status.textContent =
      `epsilon ${response.epsilon} (total ${response.total_epsilon.toFixed(2)}), ` +
      `${(response.alpha * 100).toFixed(0)}% confidence` +
      (view.subPixelWhiskers ? ", noise below one pixel" : "");
    this.app.onSnapshot(response.policy_snapshot);
  }
}

class HeatmapPanel {
  private sequence = 0;

  constructor(
    private readonly app: App,
    private readonly container: HTMLElement,
    private readonly legend: HTMLElement,
  ) {}

  async load(
    columnX: string,
    columnY: string,
    boundariesX: Boundary[],
    boundariesY: Boundary[],
    factor: number,
  ): Promise<void> {
    const seq = ++this.sequence;
    try {
      const response = await this.app.client().heatmap(this.app.table, {
        column_x: columnX,
        column_y: columnY,
        boundaries_x: boundariesX,
        boundaries_y: boundariesY,
      });
      if (seq !== this.sequence) return;
      const view = suppressCells(response, factor);
      this.container.innerHTML = renderHeatmapSvg(view, { width: 420, height: 320 });
      this.legend.innerHTML = renderLegendSvg(view, { width: 420, height: 44 });
      this.container.querySelectorAll<SVGRectElement>("rect.cell:not(.suppressed)").forEach((rect) => {
        rect.addEventListener("mouseenter", () => {
          const x = Number(rect.dataset.x);
          const y = Number(rect.dataset.y);
          const cell = view.cells[x][y];
          this.legend.innerHTML = renderLegendSvg(view, { width: 420, height: 44 }, cell);
        });
      });
      this.app.onSnapshot(response.policy_snapshot);
    } catch (error) {
      if (seq !== this.sequence) return;
      this.legend.textContent = describe(error);
    }
  }
}

class PolicyEditor {
  private state: PolicyEditorState | null = null;

  constructor(
    private readonly app: App,
    private readonly root: HTMLElement,
  ) {}

  setPolicy(doc: PolicyDocument): void {
    this.state = newEditorState(doc);
    this.render();
  }

  markSnapshot(snapshot: string): void {
    if (!this.state) return;
    this.state = detectStalePreview(this.state, snapshot);
    el("stale-banner").hidden = !this.state.stale;
  }

  private render(): void {
    if (!this.state) return;
    const disabled = editorControlsDisabled(this.state);
    const rows = this.state.draft.column_sets
      .map(
        (cs) =>
          `<label>set ${cs.id} [${cs.columns.join(", ")}] epsilon ` +
          `<input class="eps-input" data-set-id="${cs.id}" type="number" step="0.1" min="0.001" ` +
          `value="${cs.epsilon}" ${disabled ? "disabled" : ""}></label>`,
      )
      .join("<br>");
    this.root.innerHTML = `
      <div class="editor-rows">${rows}</div>
      <button id="preview-button" ${disabled ? "disabled" : ""}>preview</button>
      <button id="publish-button" ${disabled ? "disabled" : ""}>publish</button>
      <span id="editor-status">${disabled ? "published (read-only)" : "draft"}</span>`;
    if (!disabled) {
      el<HTMLButtonElement>("preview-button").addEventListener("click", () => void this.preview());
      el<HTMLButtonElement>("publish-button").addEventListener("click", () => void this.publish());
    }
  }

  private collectDraft(): void {
    if (!this.state) return;
    this.root.querySelectorAll<HTMLInputElement>("input.eps-input").forEach((input) => {
      const value = Number(input.value);
      if (value > 0) {
        this.state = setDraftEpsilon(this.state!, Number(input.dataset.setId), value);
      }
    });
  }

  private async preview(): Promise<void> {
    if (!this.state) return;
    try {
      this.collectDraft();
      const reply = await this.app.client().putPolicy(this.app.table, this.state.draft);
      this.state = editorAfterPreview(this.state, reply.policy_snapshot);
      el("editor-status").textContent = `previewing snapshot ${reply.policy_snapshot}`;
      await this.app.refreshCharts();
    } catch (error) {
      el("editor-status").textContent = describe(error);
    }
  }

  private async publish(): Promise<void> {
    if (!this.state) return;
    try {
      const reply = await this.app.client().publish(this.app.table);
      this.state = editorAfterPublish(editorAfterPreview(this.state, reply.policy_snapshot));
      this.render();
    } catch (error) {
      if (error instanceof ServiceError && error.status === 409) {
        // Someone else latched it; lock the editor with a notice.
        this.state = editorAfterPublish(this.state);
        this.render();
      }
      el("editor-status").textContent = describe(error);
    }
  }
}

const describe = (error: unknown): string =>
  error instanceof ServiceError ? `${error.code}: ${error.message}` : String(error);

class App {
  table = "";
  private snapshotListeners: ((snapshot: string) => void)[] = [];
  private histogram!: HistogramPanel;
  private heatmap!: HeatmapPanel;
  private editor!: PolicyEditor;
  private numericColumns: string[] = [];

  client(): ServiceClient {
    return new ServiceClient(
      el<HTMLInputElement>("base-url").value.replace(/\/$/, ""),
      el<HTMLInputElement>("token").value,
    );
  }

  onSnapshot(snapshot: string): void {
    this.snapshotListeners.forEach((listener) => listener(snapshot));
  }

  async start(): Promise<void> {
    this.histogram = new HistogramPanel(this, el("histogram"), el("histogram-status"));
    this.heatmap = new HeatmapPanel(this, el("heatmap"), el("heatmap-legend"));
    this.editor = new PolicyEditor(this, el("policy-editor"));
    this.snapshotListeners.push((snapshot) => this.editor.markSnapshot(snapshot));
    el<HTMLButtonElement>("connect").addEventListener("click", () => void this.connect());
  }

  private async connect(): Promise<void> {
    const status = el("connect-status");
    try {
      const listing = await this.client().listTables();
      const picker = el<HTMLSelectElement>("table-picker");
      picker.innerHTML = listing.tables
        .map((t) => `<option value="${t.name}">${t.name}${t.published ? "" : " (unpublished)"}</option>`)
        .join("");
      picker.onchange = () => void this.openTable(picker.value);
      status.textContent = `${listing.tables.length} table(s)`;
      if (listing.tables.length > 0) await this.openTable(listing.tables[0].name);
    } catch (error) {
      status.textContent = describe(error);
    }
  }

  private async openTable(table: string): Promise<void> {
    this.table = table;
    const schema = await this.client().schema(table);
    this.numericColumns = Object.entries(schema.columns ?? {})
      .filter(([, meta]) => meta.type === "real")
      .map(([name]) => name);
    el("schema-view").textContent = JSON.stringify(schema, null, 2);
    if (schema.columns) {
      this.editor.setPolicy(schema as PolicyDocument);
    }
    await this.refreshCharts();
  }

  async refreshCharts(): Promise<void> {
    const column = this.numericColumns[0];
    if (!column) return;
    const range = await this.client().rangeStats(this.table, column);
    if (typeof range.min === "number" && typeof range.max === "number") {
      const boundaries: number[] = [];
      for (let i = 0; i <= DEFAULT_BUCKETS; i++) {
        boundaries.push(range.min + ((range.max - range.min) * i) / DEFAULT_BUCKETS);
      }
      await this.histogram.load(column, boundaries);
    }
  }
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  void new App().start();
}

export { App, HistogramPanel, HeatmapPanel, PolicyEditor };
