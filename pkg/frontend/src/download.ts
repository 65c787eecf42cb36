// Download steering: start a plan, poll progress at a fixed cadence, and
// surface the 409 serialization contract as a disabled-button state.

import { ApiClient, ApiError } from "./api.js";
import { ProgressTracker } from "./state.js";

export type ScopeKind = "deployment" | "patch" | "mote";

export class DownloadPanel {
  tracker: ProgressTracker | null = null;
  activeId: number | null = null;
  busyNotice: string | null = null;

  constructor(
    private api: ApiClient,
    private pollMs = 1000,
    private sleep: (ms: number) => Promise<void> = (ms) =>
      new Promise((resolve) => setTimeout(resolve, ms)),
  ) {}

  get running(): boolean {
    return this.tracker !== null && !this.tracker.done;
  }

  async start(scope: ScopeKind, target: number | null, protocol = "cxfs"):
    Promise<ProgressTracker | null> {
    this.busyNotice = null;
    try {
      const { id } = await this.api.startDownload(scope, target, protocol);
      this.activeId = id;
      this.tracker = new ProgressTracker();
      return this.tracker;
    } catch (err) {
      if (err instanceof ApiError && err.busy) {
        this.busyNotice = `a download is already running (${err.message})`;
        return null;
      }
      throw err;
    }
  }

  async pollUntilDone(onUpdate?: () => void): Promise<ProgressTracker> {
    if (this.tracker === null || this.activeId === null) {
      throw new Error("no active download");
    }
    while (!this.tracker.done) {
      const snap = await this.api.progress(this.activeId);
      this.tracker.update(snap);
      onUpdate?.();
      if (this.tracker.done) break;
      await this.sleep(this.pollMs);
    }
    return this.tracker;
  }
}
