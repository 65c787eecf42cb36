// View-model logic kept free of the DOM so it is testable headless.
// documented defaults: green >= 90% yield, yellow 50-90, red < 50, gray dead
export function moteColor(row) {
    if (!row.alive)
        return "gray";
    if (row.yield_pct >= 90)
        return "green";
    if (row.yield_pct >= 50)
        return "yellow";
    return "red";
}
export function buildGrid(rows) {
    return rows.map((row) => ({
        barcode: row.barcode,
        color: moteColor(row),
        title: `mote ${row.barcode} (${row.role})\n` +
            `battery ${row.battery_mv} mV\n` +
            `yield ${row.yield_pct}%` +
            (row.alive ? "" : `\ndead: ${row.cause ?? "unknown"}`),
    }));
}
// Progress bars never regress, whatever order snapshots arrive in.
export class ProgressTracker {
    fractionValue = 0;
    state = "running";
    perMote = {};
    result = null;
    error = null;
    get fraction() {
        return this.fractionValue;
    }
    update(snapshot) {
        this.fractionValue = Math.max(this.fractionValue, snapshot.fraction);
        this.state = snapshot.state;
        this.perMote = snapshot.per_mote;
        this.result = snapshot.result;
        this.error = snapshot.error;
        if (snapshot.state === "done")
            this.fractionValue = 1;
    }
    get done() {
        return this.state !== "running";
    }
}
export function formatEpoch(epoch) {
    if (epoch === null || epoch === undefined)
        return "never";
    return new Date(epoch * 1000).toISOString().replace(".000Z", "Z");
}
