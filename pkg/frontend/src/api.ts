// Typed client for the control service. Every console action maps to
// exactly one documented endpoint; the console holds no truth of its own.

export interface MoteRow {
  barcode: number;
  role: string;
  patch: number | null;
  alive: boolean;
  cause: string | null;
  battery_mv: number;
  charge_fraction: number;
  last_contact_epoch: number | null;
  yield_pct: number;
  labeled: boolean;
}

export interface DeploymentInfo {
  name: string;
  seed: number;
  time_s: number;
  epoch: number;
  motes: number;
  basestation: number;
  patches: { id: number; router: number; leaves: number[] }[];
}

export interface DownloadResult {
  sessions: number;
  complete_sessions: number;
  direct_leaf_sessions: number;
  ingested: number;
  duplicates: number;
  quarantined: number;
  per_mote: Record<string, { received_bytes: number; alive: boolean }>;
}

export interface DownloadProgress {
  id: number;
  state: "running" | "done" | "failed";
  fraction: number;
  scope: string;
  target: number | null;
  protocol: string;
  per_mote: Record<string, { received_bytes: number; alive: boolean }>;
  result: DownloadResult | null;
  error: string | null;
}

export interface Alert {
  severity: "error" | "warning";
  mote: number | null;
  message: string;
}

export interface AlertsResponse {
  alerts: Alert[];
  flagged_rows: number;
  missing_samples: number;
}

export interface AdvanceSummary {
  seconds: number;
  samples: number;
  statuses: number;
  deaths: unknown[];
  downloads: number;
  battery_min_mv: number;
  battery_mean_mv: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }

  get busy(): boolean {
    return this.status === 409;
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private token: string) {}

  private headers(): Record<string, string> {
    return {
      "Authorization": `Bearer ${this.token}`,
      "Content-Type": "application/json",
    };
  }

  private async request<T>(path: string, method = "GET", body?: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let message = `${resp.status}`;
      try {
        const payload = await resp.json();
        if (payload && payload.error) message = payload.error;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, message);
    }
    return (await resp.json()) as T;
  }

  deployment(): Promise<DeploymentInfo> {
    return this.request("/deployment");
  }

  motes(): Promise<MoteRow[]> {
    return this.request("/motes");
  }

  startDownload(scope: string, target: number | null, protocol = "cxfs"): Promise<{ id: number }> {
    return this.request("/downloads", "POST", { scope, target, protocol });
  }

  progress(id: number): Promise<DownloadProgress> {
    return this.request(`/downloads/${id}/progress`);
  }

  label(barcode: number, kind: string, attributes: Record<string, unknown>): Promise<unknown> {
    return this.request("/labels", "POST", { barcode, kind, attributes });
  }

  alerts(): Promise<AlertsResponse> {
    return this.request("/qc/alerts");
  }

  advance(seconds: number): Promise<AdvanceSummary> {
    return this.request("/advance", "POST", { seconds });
  }

  async report(scope: string): Promise<string> {
    const resp = await fetch(
      `${this.baseUrl}/reports?scope=${encodeURIComponent(scope)}`,
      { headers: this.headers() },
    );
    if (!resp.ok) {
      const payload = await resp.json().catch(() => ({}));
      throw new ApiError(resp.status, payload.error ?? `${resp.status}`);
    }
    return await resp.text();
  }
}
