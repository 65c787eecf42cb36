// Typed client for the control service. Every console action maps to
// exactly one documented endpoint; the console holds no truth of its own.
export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
    }
    get busy() {
        return this.status === 409;
    }
}
export class ApiClient {
    baseUrl;
    token;
    constructor(baseUrl, token) {
        this.baseUrl = baseUrl;
        this.token = token;
    }
    headers() {
        return {
            "Authorization": `Bearer ${this.token}`,
            "Content-Type": "application/json",
        };
    }
    async request(path, method = "GET", body) {
        const resp = await fetch(this.baseUrl + path, {
            method,
            headers: this.headers(),
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!resp.ok) {
            let message = `${resp.status}`;
            try {
                const payload = await resp.json();
                if (payload && payload.error)
                    message = payload.error;
            }
            catch {
                // non-JSON error body; keep the status text
            }
            throw new ApiError(resp.status, message);
        }
        return (await resp.json());
    }
    deployment() {
        return this.request("/deployment");
    }
    motes() {
        return this.request("/motes");
    }
    startDownload(scope, target, protocol = "cxfs") {
        return this.request("/downloads", "POST", { scope, target, protocol });
    }
    progress(id) {
        return this.request(`/downloads/${id}/progress`);
    }
    label(barcode, kind, attributes) {
        return this.request("/labels", "POST", { barcode, kind, attributes });
    }
    alerts() {
        return this.request("/qc/alerts");
    }
    advance(seconds) {
        return this.request("/advance", "POST", { seconds });
    }
    async report(scope) {
        const resp = await fetch(`${this.baseUrl}/reports?scope=${encodeURIComponent(scope)}`, { headers: this.headers() });
        if (!resp.ok) {
            const payload = await resp.json().catch(() => ({}));
            throw new ApiError(resp.status, payload.error ?? `${resp.status}`);
        }
        return await resp.text();
    }
}
