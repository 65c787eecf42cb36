// Console shell: token field, deployment map, download steering with a
// live color grid, QC alerts, report export, and the labeling wizard.
// All truth lives behind the API; reloading the page loses only drafts.
import { ApiClient, ApiError } from "./api.js";
import { DownloadPanel } from "./download.js";
import { buildGrid, formatEpoch } from "./state.js";
import { LabelingWizard, SENSOR_TYPES } from "./wizard.js";
function el(tag, attrs = {}, text = "") {
    const node = document.createElement(tag);
    for (const [k, v] of Object.entries(attrs))
        node.setAttribute(k, v);
    if (text)
        node.textContent = text;
    return node;
}
function byId(id) {
    return document.getElementById(id);
}
let api = null;
let panel = null;
const wizard = new LabelingWizard();
async function connect() {
    const base = (byId("base-url").value || window.location.origin)
        .replace(/\/$/, "");
    const token = byId("token").value;
    api = new ApiClient(base, token);
    panel = new DownloadPanel(api);
    try {
        const dep = await api.deployment();
        byId("deployment-info").textContent =
            `${dep.name}: ${dep.motes} motes, ${dep.patches.length} patches, ` +
                `sim time ${(dep.time_s / 86400).toFixed(1)} d`;
        const scopeSel = byId("scope-target");
        scopeSel.innerHTML = "";
        for (const p of dep.patches) {
            scopeSel.appendChild(el("option", { value: `patch:${p.id}` }, `patch ${p.id}`));
        }
        byId("status-line").textContent = "connected";
        await refreshGrid();
        await refreshAlerts();
    }
    catch (err) {
        byId("status-line").textContent =
            err instanceof ApiError ? `connection refused: ${err.message}` : String(err);
    }
}
async function refreshGrid() {
    if (!api)
        return;
    const rows = await api.motes();
    renderGrid(rows);
}
function renderGrid(rows) {
    const grid = byId("grid");
    grid.innerHTML = "";
    for (const cell of buildGrid(rows)) {
        const div = el("div", { class: `cell ${cell.color}`, title: cell.title });
        div.textContent = String(cell.barcode);
        grid.appendChild(div);
    }
    const table = byId("mote-table");
    table.innerHTML = "";
    const header = el("tr");
    for (const h of ["mote", "role", "patch", "battery mV", "yield %",
        "last contact", "state"]) {
        header.appendChild(el("th", {}, h));
    }
    table.appendChild(header);
    for (const row of rows) {
        const tr = el("tr");
        tr.appendChild(el("td", {}, String(row.barcode)));
        tr.appendChild(el("td", {}, row.role));
        tr.appendChild(el("td", {}, String(row.patch ?? "")));
        tr.appendChild(el("td", {}, String(row.battery_mv)));
        tr.appendChild(el("td", {}, String(row.yield_pct)));
        tr.appendChild(el("td", {}, formatEpoch(row.last_contact_epoch)));
        tr.appendChild(el("td", {}, row.alive ? "alive" : `dead (${row.cause})`));
        table.appendChild(tr);
    }
}
async function startDownload() {
    if (!api || !panel)
        return;
    const scopeKind = byId("scope-kind").value;
    let target = null;
    if (scopeKind === "patch") {
        target = parseInt(byId("scope-target").value.split(":")[1], 10);
    }
    else if (scopeKind === "mote") {
        target = parseInt(byId("scope-mote").value, 10);
    }
    const protocol = byId("protocol").value;
    const button = byId("start-download");
    const tracker = await panel.start(scopeKind, target, protocol);
    if (tracker === null) {
        byId("download-notice").textContent = panel.busyNotice ?? "busy";
        button.disabled = true;
        setTimeout(() => { button.disabled = false; }, 1500);
        return;
    }
    button.disabled = true;
    byId("download-notice").textContent = "running...";
    await panel.pollUntilDone(() => {
        const pct = (tracker.fraction * 100).toFixed(0);
        byId("progress").value = tracker.fraction;
        byId("download-notice").textContent = `running ${pct}%`;
        void refreshGrid();
    });
    button.disabled = false;
    if (tracker.state === "done" && tracker.result) {
        byId("download-notice").textContent =
            `done: ${tracker.result.ingested} rows ingested, ` +
                `${tracker.result.complete_sessions}/${tracker.result.sessions} sessions complete`;
    }
    else {
        byId("download-notice").textContent = `failed: ${tracker.error}`;
    }
    await refreshGrid();
    await refreshAlerts();
}
async function refreshAlerts() {
    if (!api)
        return;
    const out = await api.alerts();
    const list = byId("alerts");
    list.innerHTML = "";
    if (out.alerts.length === 0) {
        list.appendChild(el("li", { class: "empty" }, "no alerts"));
    }
    for (const alert of out.alerts) {
        list.appendChild(el("li", { class: alert.severity }, `[${alert.severity}] ${alert.message}`));
    }
    byId("qc-counts").textContent =
        `${out.flagged_rows} flagged rows, ${out.missing_samples} missing samples`;
}
async function exportReport() {
    if (!api)
        return;
    const scope = byId("report-scope").value || "deployment";
    try {
        const csv = await api.report(scope);
        const blob = new Blob([csv], { type: "text/csv" });
        const link = el("a", {
            href: URL.createObjectURL(blob),
            download: `soilnet-${scope.replace(":", "-")}.csv`,
        });
        document.body.appendChild(link);
        link.click();
        link.remove();
        byId("report-notice").textContent = `exported ${csv.split("\n").length - 2} rows`;
    }
    catch (err) {
        byId("report-notice").textContent =
            err instanceof ApiError ? `refused: ${err.message}` : String(err);
    }
}
function renderWizard() {
    const root = byId("wizard");
    root.innerHTML = "";
    const d = wizard.draft;
    const moteRow = el("div", { class: "row" });
    moteRow.appendChild(el("label", {}, "mote barcode"));
    const moteInput = el("input", { type: "number", value: d.moteBarcode?.toString() ?? "" });
    moteInput.addEventListener("change", () => {
        d.moteBarcode = moteInput.value ? parseInt(moteInput.value, 10) : null;
    });
    moteRow.appendChild(moteInput);
    root.appendChild(moteRow);
    d.sensors.forEach((s, i) => {
        const row = el("div", { class: "row sensor" });
        row.appendChild(el("span", {}, `sensor ${i + 1}`));
        const barcode = el("input", { type: "number", placeholder: "barcode",
            value: s.barcode?.toString() ?? "" });
        barcode.addEventListener("change", () => {
            s.barcode = barcode.value ? parseInt(barcode.value, 10) : null;
        });
        const type = el("select");
        for (const name of SENSOR_TYPES) {
            type.appendChild(el("option", { value: name }, name));
        }
        type.value = s.sensorType;
        type.addEventListener("change", () => { s.sensorType = type.value; });
        const mux = el("input", { type: "number", placeholder: "multiplexer",
            value: s.multiplexer?.toString() ?? "" });
        mux.addEventListener("change", () => {
            s.multiplexer = mux.value ? parseInt(mux.value, 10) : null;
        });
        const ch = el("input", { type: "number", placeholder: "channel 0-7",
            value: s.channel?.toString() ?? "" });
        ch.addEventListener("change", () => {
            s.channel = ch.value ? parseInt(ch.value, 10) : null;
        });
        for (const node of [barcode, type, mux, ch])
            row.appendChild(node);
        root.appendChild(row);
    });
    const problems = wizard.validationProblems();
    const controls = el("div", { class: "row" });
    const add = el("button", {}, "add sensor");
    add.addEventListener("click", () => { wizard.addSensor(); renderWizard(); });
    const finish = el("button", {}, "finish labeling");
    finish.toggleAttribute("disabled", problems.length > 0);
    finish.addEventListener("click", async () => {
        if (!api)
            return;
        const ok = await wizard.finish(api);
        byId("wizard-notice").textContent = ok
            ? "labels registered"
            : `refused: ${wizard.lastError}`;
        if (ok) {
            wizard.abandon();
            renderWizard();
            await refreshGrid();
        }
    });
    const abandon = el("button", {}, "abandon");
    abandon.addEventListener("click", () => {
        wizard.abandon();
        byId("wizard-notice").textContent = "draft discarded; nothing was written";
        renderWizard();
    });
    for (const node of [add, finish, abandon])
        controls.appendChild(node);
    root.appendChild(controls);
    if (problems.length > 0) {
        root.appendChild(el("div", { class: "problems" }, problems.join("; ")));
    }
}
export function boot() {
    byId("connect").addEventListener("click", () => void connect());
    byId("start-download").addEventListener("click", () => void startDownload());
    byId("refresh-alerts").addEventListener("click", () => void refreshAlerts());
    byId("export-report").addEventListener("click", () => void exportReport());
    byId("scope-kind").addEventListener("change", () => {
        const kind = byId("scope-kind").value;
        byId("scope-target").style.display = kind === "patch" ? "" : "none";
        byId("scope-mote").style.display = kind === "mote" ? "" : "none";
    });
    wizard.addSensor();
    renderWizard();
}
if (typeof document !== "undefined") {
    document.addEventListener("DOMContentLoaded", boot);
}
