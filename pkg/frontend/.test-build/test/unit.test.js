import assert from "node:assert/strict";
import { test } from "node:test";
import { buildGrid, moteColor, ProgressTracker } from "../src/state.js";
import { DownloadPanel } from "../src/download.js";
import { LabelingWizard } from "../src/wizard.js";
import { ApiError } from "../src/api.js";
function row(overrides) {
    return {
        barcode: 1, role: "leaf", patch: 1, alive: true, cause: null,
        battery_mv: 3600, charge_fraction: 1, last_contact_epoch: null,
        yield_pct: 100, labeled: true,
        ...overrides,
    };
}
test("mote colors follow the documented thresholds", () => {
    assert.equal(moteColor(row({ yield_pct: 95 })), "green");
    assert.equal(moteColor(row({ yield_pct: 90 })), "green");
    assert.equal(moteColor(row({ yield_pct: 89.9 })), "yellow");
    assert.equal(moteColor(row({ yield_pct: 50 })), "yellow");
    assert.equal(moteColor(row({ yield_pct: 49 })), "red");
    assert.equal(moteColor(row({ alive: false, cause: "battery" })), "gray");
});
test("grid cells carry deterministic titles", () => {
    const cells = buildGrid([row({ barcode: 7, yield_pct: 42 })]);
    assert.equal(cells.length, 1);
    assert.equal(cells[0].color, "red");
    assert.match(cells[0].title, /mote 7/);
});
function snap(fraction, state = "running") {
    return {
        id: 1, state, fraction, scope: "deployment", target: null,
        protocol: "cxfs", per_mote: {}, result: null, error: null,
    };
}
test("progress never regresses even when snapshots do", () => {
    const tracker = new ProgressTracker();
    tracker.update(snap(0.4));
    assert.equal(tracker.fraction, 0.4);
    tracker.update(snap(0.2));
    assert.equal(tracker.fraction, 0.4);
    tracker.update(snap(0.9));
    tracker.update(snap(0.7, "done"));
    assert.equal(tracker.fraction, 1);
    assert.ok(tracker.done);
});
test("wizard cannot finish with required fields unassigned", () => {
    const wizard = new LabelingWizard();
    assert.ok(!wizard.canFinish());
    wizard.draft.moteBarcode = 42;
    wizard.addSensor();
    assert.ok(!wizard.canFinish());
    const sensor = wizard.draft.sensors[0];
    sensor.barcode = 9001;
    sensor.multiplexer = 700;
    sensor.channel = 0;
    assert.ok(wizard.canFinish());
    sensor.channel = 9;
    assert.ok(!wizard.canFinish());
});
test("wizard rejects two sensors on one channel", () => {
    const wizard = new LabelingWizard();
    wizard.draft.moteBarcode = 42;
    for (const barcode of [9001, 9002]) {
        wizard.addSensor();
        const s = wizard.draft.sensors[wizard.draft.sensors.length - 1];
        s.barcode = barcode;
        s.multiplexer = 700;
        s.channel = 3;
    }
    assert.ok(wizard.validationProblems().some((p) => p.includes("share a channel")));
});
test("abandoning mid-wizard never calls the API", async () => {
    const calls = [];
    const fakeApi = {
        label: async (...args) => { calls.push(JSON.stringify(args)); },
    };
    const wizard = new LabelingWizard();
    wizard.draft.moteBarcode = 42;
    wizard.addSensor();
    wizard.abandon();
    assert.equal(wizard.draft.moteBarcode, null);
    assert.equal(calls.length, 0);
    // finishing an invalid draft also refuses before any call
    wizard.draft.moteBarcode = 42;
    const ok = await wizard.finish(fakeApi);
    assert.ok(!ok);
    assert.equal(calls.length, 0);
});
test("wizard posts labels in dependency order on finish", async () => {
    const calls = [];
    const fakeApi = {
        label: async (barcode, kind) => { calls.push([barcode, kind]); },
    };
    const wizard = new LabelingWizard();
    wizard.draft.moteBarcode = 42;
    wizard.addSensor();
    Object.assign(wizard.draft.sensors[0], { barcode: 9001, multiplexer: 700, channel: 0 });
    const ok = await wizard.finish(fakeApi);
    assert.ok(ok);
    assert.deepEqual(calls.map(([, kind]) => kind), ["mote", "multiplexer", "sensor", "assignment"]);
});
test("wizard surfaces server refusals inline", async () => {
    const fakeApi = {
        label: async () => { throw new ApiError(400, "sensor barcode 9001 already labeled"); },
    };
    const wizard = new LabelingWizard();
    wizard.draft.moteBarcode = 42;
    wizard.addSensor();
    Object.assign(wizard.draft.sensors[0], { barcode: 9001, multiplexer: 700, channel: 0 });
    const ok = await wizard.finish(fakeApi);
    assert.ok(!ok);
    assert.match(wizard.lastError ?? "", /already labeled/);
});
test("download panel reports the 409 contract as a busy notice", async () => {
    const fakeApi = {
        startDownload: async () => { throw new ApiError(409, "busy: download 1"); },
    };
    const panel = new DownloadPanel(fakeApi, 1);
    const tracker = await panel.start("deployment", null);
    assert.equal(tracker, null);
    assert.match(panel.busyNotice ?? "", /already running/);
});
test("download panel polls to completion", async () => {
    const snaps = [snap(0.3), snap(0.8), snap(1, "done")];
    let i = 0;
    const fakeApi = {
        startDownload: async () => ({ id: 5 }),
        progress: async () => snaps[Math.min(i++, snaps.length - 1)],
    };
    const panel = new DownloadPanel(fakeApi, 1, async () => { });
    const tracker = await panel.start("patch", 1);
    assert.ok(tracker);
    const seen = [];
    await panel.pollUntilDone(() => seen.push(tracker.fraction));
    assert.deepEqual(seen, [0.3, 0.8, 1]);
    assert.ok(tracker.done);
});
