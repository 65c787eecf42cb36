// View-model logic kept free of the DOM so it is testable headless.

import type { DownloadProgress, MoteRow } from "./api.js";

export type CellColor = "green" | "yellow" | "red" | "gray";

// documented defaults: green >= 90% yield, yellow 50-90, red < 50, gray dead
export function moteColor(row: MoteRow): CellColor {
  if (!row.alive) return "gray";
  if (row.yield_pct >= 90) return "green";
  if (row.yield_pct >= 50) return "yellow";
  return "red";
}

export interface GridCell {
  barcode: number;
  color: CellColor;
  title: string;
}

export function buildGrid(rows: MoteRow[]): GridCell[] {
  return rows.map((row) => ({
    barcode: row.barcode,
    color: moteColor(row),
    title:
      `mote ${row.barcode} (${row.role})\n` +
      `battery ${row.battery_mv} mV\n` +
      `yield ${row.yield_pct}%` +
      (row.alive ? "" : `\ndead: ${row.cause ?? "unknown"}`),
  }));
}

// Progress bars never regress, whatever order snapshots arrive in.
export class ProgressTracker {
  private fractionValue = 0;
  state: DownloadProgress["state"] = "running";
  perMote: DownloadProgress["per_mote"] = {};
  result: DownloadProgress["result"] = null;
  error: string | null = null;

  get fraction(): number {
    return this.fractionValue;
  }

  update(snapshot: DownloadProgress): void {
    this.fractionValue = Math.max(this.fractionValue, snapshot.fraction);
    this.state = snapshot.state;
    this.perMote = snapshot.per_mote;
    this.result = snapshot.result;
    this.error = snapshot.error;
    if (snapshot.state === "done") this.fractionValue = 1;
  }

  get done(): boolean {
    return this.state !== "running";
  }
}

export function formatEpoch(epoch: number | null): string {
  if (epoch === null || epoch === undefined) return "never";
  return new Date(epoch * 1000).toISOString().replace(".000Z", "Z");
}
