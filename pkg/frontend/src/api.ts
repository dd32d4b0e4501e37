/** Typed client for the query service. Every number the UI renders comes
 *  through this module; there is no other data path. */

export type Boundary = number | string;

export interface HistogramRequest {
  column: string;
  boundaries: Boundary[];
  include_cdf?: boolean;
}

export interface CdfSeries {
  boundaries: Boundary[];
  counts: number[];
  radii: number[];
  n_vars: number[];
}

export interface HistogramResponse {
  table: string;
  columns: string[];
  boundaries: Boundary[];
  counts: number[];
  radii: number[];
  n_vars: number[];
  null_count: number;
  alpha: number;
  epsilon: number;
  total_epsilon: number;
  policy_snapshot: string;
  published: boolean;
  cdf?: CdfSeries;
}

export interface HeatmapRequest {
  column_x: string;
  column_y: string;
  boundaries_x: Boundary[];
  boundaries_y: Boundary[];
}

export interface HeatmapResponse {
  table: string;
  columns: string[];
  boundaries_x: Boundary[];
  boundaries_y: Boundary[];
  counts: number[][];
  radii: number[][];
  n_vars: number[][];
  null_count: number;
  alpha: number;
  epsilon: number;
  total_epsilon: number;
  policy_snapshot: string;
  published: boolean;
}

export interface CountsResponse {
  table: string;
  column: string;
  alpha: number;
  total_epsilon: number;
  policy_snapshot: string;
  null_count?: number;
  null_radius?: number;
  distinct_count?: number;
  distinct_radius?: number;
}

export interface ColumnSetEntry {
  id: number;
  columns: string[];
  epsilon: number;
}

export interface PolicyDocument {
  table: string;
  branching: number;
  alpha: number;
  published: boolean;
  columns: Record<string, { type: string; quantization: Record<string, unknown> }>;
  column_sets: ColumnSetEntry[];
  count_releases: Record<string, { null_epsilon?: number; distinct_epsilon?: number }>;
}

export interface SchemaResponse extends Partial<PolicyDocument> {
  table: string;
  published: boolean;
  total_epsilon?: number;
  policy_snapshot?: string;
  has_policy?: boolean;
}

export interface RangeStats {
  column: string;
  min: number | string | null;
  max: number | string | null;
  source: "policy" | "raw";
  total_rows?: number;
  non_null_rows?: number;
}

export interface TableEntry {
  name: string;
  published: boolean;
  has_policy: boolean;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    readonly token: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body === undefined ? {} : { "Content-Type": "application/json" }),
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let code = "error";
      let message = text;
      try {
        const doc = JSON.parse(text);
        code = doc.code ?? code;
        message = doc.message ?? message;
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(response.status, code, message);
    }
    return JSON.parse(text) as T;
  }

  listTables(): Promise<{ tables: TableEntry[] }> {
    return this.request("GET", "/tables");
  }

  schema(table: string): Promise<SchemaResponse> {
    return this.request("GET", `/tables/${table}/schema`);
  }

  histogram(table: string, body: HistogramRequest): Promise<HistogramResponse> {
    return this.request("POST", `/tables/${table}/histogram`, body);
  }

  heatmap(table: string, body: HeatmapRequest): Promise<HeatmapResponse> {
    return this.request("POST", `/tables/${table}/heatmap`, body);
  }

  counts(table: string, column: string): Promise<CountsResponse> {
    return this.request("POST", `/tables/${table}/counts/${column}`);
  }

  rangeStats(table: string, column: string, raw = false): Promise<RangeStats> {
    const suffix = raw ? "?raw=true" : "";
    return this.request("GET", `/tables/${table}/range-stats/${column}${suffix}`);
  }

  putPolicy(table: string, doc: PolicyDocument): Promise<{ policy_snapshot: string }> {
    return this.request("PUT", `/tables/${table}/policy`, doc);
  }

  publish(table: string): Promise<{ published: boolean; policy_snapshot: string }> {
    return this.request("POST", `/tables/${table}/publish`);
  }
}
