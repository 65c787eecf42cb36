// Download steering: start a plan, poll progress at a fixed cadence, and
// surface the 409 serialization contract as a disabled-button state.
import { ApiError } from "./api.js";
import { ProgressTracker } from "./state.js";
export class DownloadPanel {
    api;
    pollMs;
    sleep;
    tracker = null;
    activeId = null;
    busyNotice = null;
    constructor(api, pollMs = 1000, sleep = (ms) => new Promise((resolve) => setTimeout(resolve, ms))) {
        this.api = api;
        this.pollMs = pollMs;
        this.sleep = sleep;
    }
    get running() {
        return this.tracker !== null && !this.tracker.done;
    }
    async start(scope, target, protocol = "cxfs") {
        this.busyNotice = null;
        try {
            const { id } = await this.api.startDownload(scope, target, protocol);
            this.activeId = id;
            this.tracker = new ProgressTracker();
            return this.tracker;
        }
        catch (err) {
            if (err instanceof ApiError && err.busy) {
                this.busyNotice = `a download is already running (${err.message})`;
                return null;
            }
            throw err;
        }
    }
    async pollUntilDone(onUpdate) {
        if (this.tracker === null || this.activeId === null) {
            throw new Error("no active download");
        }
        while (!this.tracker.done) {
            const snap = await this.api.progress(this.activeId);
            this.tracker.update(snap);
            onUpdate?.();
            if (this.tracker.done)
                break;
            await this.sleep(this.pollMs);
        }
        return this.tracker;
    }
}
