"""HTTP+JSON control service, the console's only window into the world.

Endpoints (token auth via Authorization: Bearer or X-Auth-Token):

    GET  /deployment                 deployment overview
    GET  /motes                      grid rows: battery, contact, yield
    GET  /motes/{id}/status          one mote in detail
    POST /downloads                  {scope, target?, protocol?} -> {id}
    GET  /downloads/{id}/progress    monotone progress snapshot
    POST /labels                     {barcode, kind, attributes}
    GET  /qc/alerts                  alert list
    GET  /reports?scope=...          CSV body
    GET  /reports/summary?scope=...  report summary JSON
    POST /advance                    {seconds} -> advance summary

Mutating commands are serialized: while a download runs, POST /downloads
and POST /advance answer 409. Progress reads are lock-free snapshots. The
console's static bundle is served from frontend/dist when present.
"""

from __future__ import annotations

import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .pipeline import RegistryError, RegistryIncompleteError
from .world import World

STATIC_TYPES = {
    ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
    ".map": "application/json", ".svg": "image/svg+xml",
}


class ServiceState:
    def __init__(self, world: World, token: str, throttle_ms: int = 0,
                 state_dir: str | None = None, static_dir: Path | None = None):
        self.world = world
        self.token = token
        self.throttle_ms = throttle_ms
        self.state_dir = state_dir
        self.static_dir = static_dir
        self.command_lock = threading.Lock()
        self.downloads: dict[int, dict] = {}
        self._download_seq = 0
        self.busy_with: str | None = None

    # --- download worker --------------------------------------------------

    def start_download(self, scope: str, target, protocol: str) -> int:
        self._download_seq += 1
        did = self._download_seq
        snapshot = {
            "id": did, "state": "running", "fraction": 0.0,
            "scope": scope, "target": target, "protocol": protocol,
            "per_mote": {}, "result": None, "error": None,
        }
        self.downloads[did] = snapshot

        def progress(done, total, report):
            snapshot["fraction"] = max(snapshot["fraction"],
                                       done / total if total else 1.0)
            snapshot["per_mote"] = {
                str(m): dict(v) for m, v in report.per_mote.items()
            }
            if self.throttle_ms:
                time.sleep(self.throttle_ms / 1000.0)

        def run():
            try:
                report = self.world.trigger_download(scope, target, protocol, progress)
                snapshot["result"] = {
                    "sessions": len(report.sessions),
                    "complete_sessions": sum(s.complete for s in report.sessions),
                    "direct_leaf_sessions": len(report.direct_leaf_sessions()),
                    "ingested": report.ingested,
                    "duplicates": report.duplicates,
                    "quarantined": report.quarantined,
                    "per_mote": {str(m): v for m, v in report.per_mote.items()},
                }
                snapshot["fraction"] = 1.0
                snapshot["state"] = "done"
            except Exception as err:   # surfaced to the operator, not swallowed
                snapshot["state"] = "failed"
                snapshot["error"] = str(err)
            finally:
                self._persist()
                self.busy_with = None
                self.command_lock.release()

        self.busy_with = f"download {did}"
        threading.Thread(target=run, daemon=True).start()
        return did

    def _persist(self):
        if self.state_dir:
            from .cli import STATE_PICKLE

            self.world.save(Path(self.state_dir) / STATE_PICKLE)


def mote_rows(world: World) -> list[dict]:
    schedule = world.schedule_per_day()
    received = world.received_per_day()
    per_mote_received: dict[int, int] = {}
    for (m, _d), n in received.items():
        per_mote_received[m] = per_mote_received.get(m, 0) + n
    days = max(1.0, world.t / 86400.0)
    rows = []
    for barcode, mote in sorted(world.motes.items()):
        expected = schedule.get(barcode, 0.0) * days
        got = per_mote_received.get(barcode, 0)
        rows.append({
            "barcode": barcode,
            "role": mote.config.role,
            "patch": mote.config.patch,
            "alive": mote.alive,
            "cause": mote.failure.cause,
            "battery_mv": round(mote.voltage_mv(world.t), 1),
            "charge_fraction": round(
                max(0.0, mote.battery.charge_mah / mote.battery.capacity_mah), 4
            ),
            "last_contact_epoch": world.last_contact.get(barcode),
            "yield_pct": round(100.0 * min(1.0, got / expected), 1) if expected else 0.0,
            "labeled": barcode in world.registry.motes,
        })
    return rows


class Handler(BaseHTTPRequestHandler):
    server_version = "soilnet"
    state: ServiceState = None   # set by serve()

    # --- plumbing -----------------------------------------------------------

    def log_message(self, fmt, *args):
        pass

    def send_json(self, code: int, payload):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def send_text(self, code: int, text: str, content_type="text/plain"):
        body = text.encode()
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if not length:
            return {}
        try:
            return json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            return {}

    def authorized(self) -> bool:
        token = self.state.token
        if not token:
            return True
        header = self.headers.get("Authorization", "")
        if header == f"Bearer {token}":
            return True
        return self.headers.get("X-Auth-Token") == token

    # --- static console -------------------------------------------------------

    def try_static(self, path: str) -> bool:
        root = self.state.static_dir
        if root is None:
            return False
        if path in ("/", "/ui", "/ui/"):
            path = "/ui/index.html"
        if not path.startswith("/ui/"):
            return False
        target = (root / path[4:]).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            return False
        ctype = STATIC_TYPES.get(target.suffix, "application/octet-stream")
        self.send_text(200, target.read_text(), ctype)
        return True

    # --- methods ---------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers",
                         "Authorization, X-Auth-Token, Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()

    def do_GET(self):
        parsed = urlparse(self.path)
        path = parsed.path
        if self.try_static(path):
            return
        if not self.authorized():
            return self.send_json(401, {"error": "missing or bad token"})
        world = self.state.world
        if path == "/deployment":
            sc = world.scenario
            return self.send_json(200, {
                "name": sc.name,
                "seed": sc.seed,
                "time_s": world.t,
                "epoch": world.now_epoch,
                "motes": len(sc.motes),
                "basestation": sc.basestation,
                "patches": [
                    {"id": p.id, "router": p.router, "leaves": p.leaves}
                    for p in sc.patches.values()
                ],
            })
        if path == "/motes":
            return self.send_json(200, mote_rows(world))
        if path.startswith("/motes/") and path.endswith("/status"):
            try:
                barcode = int(path.split("/")[2])
                mote = world.motes[barcode]
            except (ValueError, KeyError):
                return self.send_json(404, {"error": "no such mote"})
            cov = world.coverage().get(barcode)
            return self.send_json(200, {
                "barcode": barcode,
                "role": mote.config.role,
                "patch": mote.config.patch,
                "alive": mote.alive,
                "cause": mote.failure.cause,
                "battery_mv": round(mote.voltage_mv(world.t), 1),
                "moisture_pct": round(mote.failure.moisture_pct, 1),
                "log_bytes": mote.log.end_cookie,
                "expected": list(cov.expected),
                "missing": [list(g) for g in cov.missing],
                "settings": mote.settings.to_dict() if mote.settings else None,
            })
        if path.startswith("/downloads/") and path.endswith("/progress"):
            try:
                did = int(path.split("/")[2])
                snapshot = self.state.downloads[did]
            except (ValueError, KeyError):
                return self.send_json(404, {"error": "no such download"})
            return self.send_json(200, snapshot)
        if path == "/qc/alerts":
            alerts, result = world.qc_alerts(_record=False)
            return self.send_json(200, {
                "alerts": [a.to_dict() for a in alerts],
                "flagged_rows": sum(1 for f in result.flags.values() if f != ["ok"]),
                "missing_samples": len(result.missing),
            })
        if path == "/reports" or path == "/reports/summary":
            query = parse_qs(parsed.query)
            scope_text = (query.get("scope") or ["deployment"])[0]
            try:
                scope, target = _parse_scope(scope_text)
                csv_text, summary = world.export_report(
                    scope, target, _record=(path == "/reports")
                )
            except RegistryIncompleteError as err:
                return self.send_json(409, {"error": str(err), "gaps": err.gaps})
            except (ValueError, KeyError) as err:
                return self.send_json(400, {"error": str(err)})
            if path == "/reports/summary":
                return self.send_json(200, summary)
            self.state._persist()
            return self.send_text(200, csv_text, "text/csv")
        return self.send_json(404, {"error": f"no route {path}"})

    def do_POST(self):
        parsed = urlparse(self.path)
        path = parsed.path
        if not self.authorized():
            return self.send_json(401, {"error": "missing or bad token"})
        state = self.state
        world = state.world
        if path == "/downloads":
            body = self.read_body()
            scope = body.get("scope", "deployment")
            target = body.get("target")
            protocol = body.get("protocol", "cxfs")
            if protocol not in ("cxfs", "koala", "flood"):
                return self.send_json(400, {"error": f"unknown protocol {protocol}"})
            if scope not in ("deployment", "patch", "mote"):
                return self.send_json(400, {"error": f"unknown scope {scope}"})
            if scope in ("patch", "mote") and target is None:
                return self.send_json(400, {"error": "scope needs a target"})
            if not state.command_lock.acquire(blocking=False):
                return self.send_json(
                    409, {"error": f"busy: {state.busy_with or 'command running'}"}
                )
            did = state.start_download(scope, target, protocol)
            return self.send_json(202, {"id": did})
        if path == "/labels":
            body = self.read_body()
            if not state.command_lock.acquire(blocking=False):
                return self.send_json(409, {"error": "busy"})
            try:
                world.label(
                    int(body["barcode"]), body["kind"], body.get("attributes") or {}
                )
                state._persist()
            except (RegistryError, KeyError, TypeError, ValueError) as err:
                return self.send_json(400, {"error": str(err)})
            finally:
                state.command_lock.release()
            return self.send_json(200, {"ok": True})
        if path == "/advance":
            body = self.read_body()
            seconds = float(body.get("seconds") or 0.0)
            if "days" in body:
                seconds += float(body["days"]) * 86400.0
            if seconds <= 0:
                return self.send_json(400, {"error": "advance needs seconds or days"})
            if not state.command_lock.acquire(blocking=False):
                return self.send_json(
                    409, {"error": f"busy: {state.busy_with or 'command running'}"}
                )
            try:
                summary = world.advance(seconds)
                state._persist()
            finally:
                state.command_lock.release()
            return self.send_json(200, summary.to_dict())
        return self.send_json(404, {"error": f"no route {path}"})


def _parse_scope(text: str) -> tuple[str, int | None]:
    if text == "deployment":
        return "deployment", None
    for prefix in ("patch", "mote"):
        if text.startswith(prefix + ":"):
            return prefix, int(text.split(":", 1)[1])
    raise ValueError(f"bad scope {text!r}")


def make_server(world: World, port: int = 8471, token: str | None = None,
                throttle_ms: int = 0, state_dir: str | None = None
                ) -> ThreadingHTTPServer:
    token = token if token is not None else os.environ.get("SOILNET_TOKEN", "")
    static_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    state = ServiceState(
        world, token, throttle_ms, state_dir,
        static_dir if static_dir.is_dir() else None,
    )
    handler = type("BoundHandler", (Handler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.service_state = state
    return server


def serve(world: World, port: int = 8471, token: str | None = None,
          throttle_ms: int = 0, state_dir: str | None = None):
    server = make_server(world, port, token, throttle_ms, state_dir)
    sc = world.scenario
    print(f"serving {sc.name!r} on http://127.0.0.1:{port} "
          f"(auth {'on' if server.service_state.token else 'off'})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
