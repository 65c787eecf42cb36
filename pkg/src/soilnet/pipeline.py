"""PC-side ingestion: raw packet store, typed tables, registry, reports.

Every packet arriving from the basestation lands verbatim in an
append-only raw table before any parsing happens; decoders then dispatch
records by type into typed tables keyed (mote, cookie), so replays and
tunneled/direct double-deliveries deduplicate exactly. Anything that does
not parse is quarantined with its bytes and never dropped.

Persistence is a single sqlite file (or :memory: for tests); the registry
travels as JSON. Report generation refuses scopes whose metadata is
incomplete.
"""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .records import (
    DecodeError,
    SampleRecord,
    StatusRecord,
    TimeReferenceRecord,
    TunneledRecord,
    _decode_at,
)
from .sensors import SENSOR_TYPES, convert_sample
from .timerec import ClockSegment

_SCHEMA = """
CREATE TABLE IF NOT EXISTS raw_packets (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    arrival_time REAL NOT NULL,
    source_path TEXT NOT NULL,
    via_router INTEGER,
    raw BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS samples (
    mote INTEGER NOT NULL,
    cookie INTEGER NOT NULL,
    multiplexer INTEGER NOT NULL,
    channel INTEGER NOT NULL,
    local_time INTEGER NOT NULL,
    seq_no INTEGER NOT NULL,
    raw_adc INTEGER NOT NULL,
    value REAL,
    value_flag TEXT,
    utc REAL,
    provenance TEXT NOT NULL,
    raw_ref INTEGER NOT NULL REFERENCES raw_packets(seq),
    PRIMARY KEY (mote, cookie)
);
CREATE TABLE IF NOT EXISTS status (
    mote INTEGER NOT NULL,
    cookie INTEGER NOT NULL,
    battery_mv INTEGER NOT NULL,
    humidity_pct INTEGER NOT NULL,
    temp_centi_c INTEGER NOT NULL,
    local_time INTEGER NOT NULL,
    utc REAL,
    provenance TEXT NOT NULL,
    raw_ref INTEGER NOT NULL,
    PRIMARY KEY (mote, cookie)
);
CREATE TABLE IF NOT EXISTS time_references (
    mote INTEGER NOT NULL,
    cookie INTEGER NOT NULL,
    local_time INTEGER NOT NULL,
    local_sub_ticks INTEGER NOT NULL,
    global_time INTEGER,
    neighbor_id INTEGER,
    neighbor_local_time INTEGER,
    neighbor_sub_ticks INTEGER,
    provenance TEXT NOT NULL,
    raw_ref INTEGER NOT NULL,
    PRIMARY KEY (mote, cookie)
);
CREATE TABLE IF NOT EXISTS anchors (
    mote INTEGER NOT NULL,
    local_s REAL NOT NULL,
    global_s REAL NOT NULL,
    source TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS decode_failures (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    raw_ref INTEGER NOT NULL,
    offset INTEGER NOT NULL,
    cause TEXT NOT NULL,
    raw BLOB NOT NULL
);
"""

REPORT_COLUMNS = [
    "mote", "patch", "multiplexer", "channel", "sensor_barcode", "sensor_type",
    "depth_cm", "cookie", "local_time", "utc_iso", "raw_adc", "value", "unit",
    "flags",
]


class RegistryError(ValueError):
    pass


class RegistryIncompleteError(RegistryError):
    def __init__(self, gaps: list[str]):
        super().__init__("registry incomplete: " + "; ".join(gaps))
        self.gaps = gaps


@dataclass
class RawPacket:
    raw: bytes
    arrival_time: float
    source_path: str = "direct"      # direct | tunneled
    via_router: int | None = None


@dataclass
class IngestStats:
    raw_rows: int = 0
    inserted: int = 0
    duplicates: int = 0
    quarantined: int = 0

    def merged(self, other: "IngestStats") -> "IngestStats":
        return IngestStats(
            self.raw_rows + other.raw_rows,
            self.inserted + other.inserted,
            self.duplicates + other.duplicates,
            self.quarantined + other.quarantined,
        )


class DeploymentRegistry:
    """Barcode-keyed metadata: motes, multiplexers, sensors, assignments.

    Labeling is enforced at installation: report generation refuses any
    scope whose motes or channel assignments are missing.
    """

    def __init__(self):
        self.motes: dict[int, dict] = {}
        self.multiplexers: dict[int, dict] = {}
        self.sensors: dict[int, dict] = {}
        # (mote, multiplexer, channel) -> sensor barcode
        self.assignments: dict[tuple[int, int, int], int] = {}

    def label_device(self, barcode: int, kind: str, attributes: dict | None = None):
        attributes = dict(attributes or {})
        table = {
            "mote": self.motes,
            "multiplexer": self.multiplexers,
            "sensor": self.sensors,
        }.get(kind)
        if table is None:
            raise RegistryError(f"unknown device kind {kind!r}")
        if barcode in table:
            raise RegistryError(f"{kind} barcode {barcode} already labeled")
        if kind == "sensor" and attributes.get("sensor_type") not in SENSOR_TYPES:
            raise RegistryError(
                f"sensor {barcode} needs a known sensor_type, got "
                f"{attributes.get('sensor_type')!r}"
            )
        table[barcode] = attributes
        return attributes

    def assign_sensor(self, sensor: int, mote: int, multiplexer: int, channel: int):
        if sensor not in self.sensors:
            raise RegistryError(f"sensor {sensor} not labeled")
        if mote not in self.motes:
            raise RegistryError(f"mote {mote} not labeled")
        live = {s: key for key, s in self.assignments.items()}
        if sensor in live:
            raise RegistryError(
                f"sensor {sensor} already assigned at {live[sensor]}"
            )
        key = (mote, multiplexer, channel)
        if key in self.assignments:
            raise RegistryError(f"channel {key} already occupied")
        self.assignments[key] = sensor

    def sensor_at(self, mote: int, multiplexer: int, channel: int):
        barcode = self.assignments.get((mote, multiplexer, channel))
        if barcode is None:
            return None
        info = dict(self.sensors[barcode])
        info["barcode"] = barcode
        return info

    def gaps_for(self, mote_ids) -> list[str]:
        gaps = []
        for m in sorted(mote_ids):
            if m not in self.motes:
                gaps.append(f"mote {m} unlabeled")
        return gaps

    def to_dict(self) -> dict:
        return {
            "motes": {str(k): v for k, v in sorted(self.motes.items())},
            "multiplexers": {str(k): v for k, v in sorted(self.multiplexers.items())},
            "sensors": {str(k): v for k, v in sorted(self.sensors.items())},
            "assignments": [
                {"mote": m, "multiplexer": x, "channel": c, "sensor": s}
                for (m, x, c), s in sorted(self.assignments.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "DeploymentRegistry":
        reg = cls()
        for k, v in data.get("motes", {}).items():
            reg.motes[int(k)] = dict(v)
        for k, v in data.get("multiplexers", {}).items():
            reg.multiplexers[int(k)] = dict(v)
        for k, v in data.get("sensors", {}).items():
            reg.sensors[int(k)] = dict(v)
        for a in data.get("assignments", []):
            reg.assignments[(a["mote"], a["multiplexer"], a["channel"])] = a["sensor"]
        return reg


def label_device(registry: DeploymentRegistry, barcode: int, kind: str, attributes=None):
    return registry.label_device(barcode, kind, attributes)


class Pipeline:
    """Single-writer ingestion store over sqlite."""

    def __init__(self, db_path: str = ":memory:"):
        self.db_path = db_path
        self._open()

    def _open(self):
        # one writer, concurrent readers; mutating commands are serialized
        # upstream, so handler threads may share the connection
        self.db = sqlite3.connect(self.db_path, check_same_thread=False)
        self.db.executescript(_SCHEMA)
        self.db.commit()

    # pickling support for CLI state snapshots: carry the path, reopen
    def __getstate__(self):
        if self.db_path == ":memory:":
            raise TypeError("in-memory pipeline cannot be snapshotted")
        self.db.commit()
        return {"db_path": self.db_path}

    def __setstate__(self, state):
        self.db_path = state["db_path"]
        self._open()

    def close(self):
        self.db.commit()
        self.db.close()

    # --- ingestion ------------------------------------------------------

    def ingest_batch(self, packets: list[RawPacket], registry: DeploymentRegistry) -> IngestStats:
        stats = IngestStats()
        cur = self.db.cursor()
        for pkt in packets:
            cur.execute(
                "INSERT INTO raw_packets (arrival_time, source_path, via_router, raw)"
                " VALUES (?, ?, ?, ?)",
                (pkt.arrival_time, pkt.source_path, pkt.via_router, pkt.raw),
            )
            raw_ref = cur.lastrowid
            stats.raw_rows += 1
            self._dispatch_packet(cur, pkt, raw_ref, registry, stats)
        self.db.commit()
        return stats

    def _dispatch_packet(self, cur, pkt: RawPacket, raw_ref: int, registry, stats):
        offset = 0
        data = pkt.raw
        while offset < len(data):
            try:
                record, nxt = _decode_at(data, offset)
            except DecodeError as err:
                # framing is lost from here on; quarantine the remainder
                cur.execute(
                    "INSERT INTO decode_failures (raw_ref, offset, cause, raw)"
                    " VALUES (?, ?, ?, ?)",
                    (raw_ref, err.offset, err.cause, data[offset:]),
                )
                stats.quarantined += 1
                return
            self._dispatch_record(cur, record, pkt, raw_ref, registry, stats,
                                  provenance="direct")
            offset = nxt

    def _dispatch_record(self, cur, record, pkt, raw_ref, registry, stats, provenance):
        if isinstance(record, TunneledRecord):
            inner = record.inner_record()
            self._dispatch_record(
                cur, inner, pkt, raw_ref, registry, stats,
                provenance=f"tunneled:{record.tunnel_router_id}",
            )
            return
        if record.origin_mote not in registry.motes:
            cur.execute(
                "INSERT INTO decode_failures (raw_ref, offset, cause, raw)"
                " VALUES (?, ?, ?, ?)",
                (raw_ref, 0, f"unregistered mote {record.origin_mote}", b""),
            )
            stats.quarantined += 1
            return
        if isinstance(record, SampleRecord):
            sensor = registry.sensor_at(
                record.origin_mote, record.multiplexer_id, record.channel
            )
            if sensor is None:
                value, flag = None, "no-calibration"
            else:
                value, flag = convert_sample(record.raw_adc, sensor["sensor_type"])
            cur.execute(
                "INSERT OR IGNORE INTO samples (mote, cookie, multiplexer, channel,"
                " local_time, seq_no, raw_adc, value, value_flag, utc, provenance,"
                " raw_ref) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, NULL, ?, ?)",
                (record.origin_mote, record.cookie, record.multiplexer_id,
                 record.channel, record.local_time, record.sequence,
                 record.raw_adc, value, flag, provenance, raw_ref),
            )
        elif isinstance(record, StatusRecord):
            cur.execute(
                "INSERT OR IGNORE INTO status (mote, cookie, battery_mv,"
                " humidity_pct, temp_centi_c, local_time, utc, provenance, raw_ref)"
                " VALUES (?, ?, ?, ?, ?, ?, NULL, ?, ?)",
                (record.origin_mote, record.cookie, record.battery_millivolts,
                 record.enclosure_humidity_pct, record.internal_temp_centi_c,
                 record.local_time, provenance, raw_ref),
            )
        elif isinstance(record, TimeReferenceRecord):
            cur.execute(
                "INSERT OR IGNORE INTO time_references (mote, cookie, local_time,"
                " local_sub_ticks, global_time, neighbor_id, neighbor_local_time,"
                " neighbor_sub_ticks, provenance, raw_ref)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (record.origin_mote, record.cookie, record.local_time,
                 record.local_sub_ticks, record.global_time, record.neighbor_id,
                 record.neighbor_local_time, record.neighbor_sub_ticks,
                 provenance, raw_ref),
            )
        else:
            raise TypeError(f"unexpected record class {type(record).__name__}")
        if cur.rowcount == 0:
            stats.duplicates += 1
        else:
            stats.inserted += 1

    def add_anchor(self, mote: int, local_s: float, global_s: float, source: str):
        self.db.execute(
            "INSERT INTO anchors (mote, local_s, global_s, source) VALUES (?, ?, ?, ?)",
            (mote, local_s, global_s, source),
        )
        self.db.commit()

    # --- reconstruction hooks --------------------------------------------

    def anchor_points(self) -> dict[int, list[tuple[float, float]]]:
        """(local, global) anchor pairs per mote: basestation contact
        anchors plus any global-time references carried in records."""
        out: dict[int, list[tuple[float, float]]] = {}
        for mote, local_s, global_s in self.db.execute(
            "SELECT mote, local_s, global_s FROM anchors ORDER BY mote, local_s"
        ):
            out.setdefault(mote, []).append((local_s, global_s))
        for mote, local, sub, glob in self.db.execute(
            "SELECT mote, local_time, local_sub_ticks, global_time FROM"
            " time_references WHERE global_time IS NOT NULL ORDER BY mote, cookie"
        ):
            out.setdefault(mote, []).append((local + sub / 32768.0, float(glob)))
        for pts in out.values():
            pts.sort(key=lambda p: p[0])
        return out

    def cross_references(self):
        from .timerec import CrossReference

        refs = []
        for mote, local, sub, nbr, nlocal, nsub in self.db.execute(
            "SELECT mote, local_time, local_sub_ticks, neighbor_id,"
            " neighbor_local_time, neighbor_sub_ticks FROM time_references"
            " WHERE neighbor_id IS NOT NULL ORDER BY mote, cookie"
        ):
            a = local + sub / 32768.0
            b = nlocal + (nsub or 0) / 32768.0
            # one exchanged reading anchors either clock from the other
            refs.append(CrossReference(mote=mote, local_s=a,
                                       neighbor=nbr, neighbor_local_s=b))
            refs.append(CrossReference(mote=nbr, local_s=b,
                                       neighbor=mote, neighbor_local_s=a))
        return refs

    def local_time_streams(self) -> dict[int, list[float]]:
        out: dict[int, list[float]] = {}
        for mote, local in self.db.execute(
            "SELECT mote, local_time FROM samples ORDER BY mote, cookie"
        ):
            out.setdefault(mote, []).append(float(local))
        return out

    def channel_trace(
        self, mote: int, multiplexer: int, channel: int
    ) -> tuple[list[float], list[int]]:
        rows = self.db.execute(
            "SELECT local_time, raw_adc FROM samples WHERE mote = ? AND"
            " multiplexer = ? AND channel = ? ORDER BY cookie",
            (mote, multiplexer, channel),
        ).fetchall()
        return [float(t) for t, _ in rows], [v for _, v in rows]

    def apply_clock_segments(self, segments_by_mote: dict[int, list[ClockSegment]]):
        cur = self.db.cursor()
        for mote, segments in segments_by_mote.items():
            for seg in segments:
                if not seg.anchored:
                    continue
                for table in ("samples", "status"):
                    cur.execute(
                        f"UPDATE {table} SET utc = ? * local_time + ?"
                        " WHERE mote = ? AND local_time BETWEEN ? AND ?",
                        (seg.slope, seg.offset, mote,
                         int(seg.local_lo) - 1, int(seg.local_hi) + 1),
                    )
        self.db.commit()

    # --- integrity & access ----------------------------------------------

    def referential_scan(self) -> int:
        """Typed rows whose raw packet row is missing (must be zero)."""
        (n,) = self.db.execute(
            "SELECT (SELECT COUNT(*) FROM samples s LEFT JOIN raw_packets r"
            "  ON s.raw_ref = r.seq WHERE r.seq IS NULL)"
            " + (SELECT COUNT(*) FROM status s LEFT JOIN raw_packets r"
            "  ON s.raw_ref = r.seq WHERE r.seq IS NULL)"
        ).fetchone()
        return n

    def counts(self) -> dict:
        out = {}
        for table in ("raw_packets", "samples", "status", "time_references",
                      "decode_failures"):
            (out[table],) = self.db.execute(f"SELECT COUNT(*) FROM {table}").fetchone()
        return out

    def sample_keys(self) -> set[tuple[int, int]]:
        return set(self.db.execute("SELECT mote, cookie FROM samples"))

    def quarantine_dump(self) -> list[tuple]:
        return list(self.db.execute(
            "SELECT id, raw_ref, offset, cause, raw FROM decode_failures ORDER BY id"
        ))

    # --- reports -----------------------------------------------------------

    def export_report(
        self,
        registry: DeploymentRegistry,
        mote_ids: list[int],
        patch_of: dict[int, int] | None = None,
        t0: float | None = None,
        t1: float | None = None,
    ) -> tuple[str, dict]:
        """CSV with a stable column order plus a summary block.

        Refuses (listing the gaps) when the registry is incomplete for the
        requested motes.
        """
        gaps = registry.gaps_for(mote_ids)
        if gaps:
            raise RegistryIncompleteError(gaps)
        patch_of = patch_of or {}
        where = "WHERE mote IN (%s)" % ",".join("?" * len(mote_ids))
        args: list = list(mote_ids)
        if t0 is not None:
            where += " AND utc >= ?"
            args.append(t0)
        if t1 is not None:
            where += " AND utc < ?"
            args.append(t1)
        rows = self.db.execute(
            "SELECT mote, multiplexer, channel, cookie, local_time, utc, raw_adc,"
            f" value, value_flag, provenance FROM samples {where}"
            " ORDER BY mote, cookie",
            args,
        ).fetchall()
        lines = [",".join(REPORT_COLUMNS)]
        for mote, mux, ch, cookie, local, utc, raw, value, vflag, prov in rows:
            sensor = registry.sensor_at(mote, mux, ch) or {}
            unit = ""
            if sensor:
                st = SENSOR_TYPES.get(sensor.get("sensor_type", ""), None)
                unit = st.unit if st else ""
            flags = ";".join(x for x in (vflag, prov) if x)
            lines.append(",".join([
                str(mote),
                str(patch_of.get(mote, "")),
                str(mux),
                str(ch),
                str(sensor.get("barcode", "")),
                str(sensor.get("sensor_type", "")),
                str(sensor.get("depth_cm", "")),
                str(cookie),
                str(local),
                _iso(utc),
                str(raw),
                f"{value:.6f}" if value is not None else "",
                unit,
                flags,
            ]))
        csv_text = "\n".join(lines) + "\n"
        summary = self._summary(mote_ids, rows)
        return csv_text, summary

    def _summary(self, mote_ids, rows) -> dict:
        timestamped = sum(1 for r in rows if r[5] is not None)
        battery = {}
        for mote, mv, utc in self.db.execute(
            "SELECT mote, battery_mv, utc FROM status WHERE mote IN (%s)"
            " ORDER BY mote, cookie" % ",".join("?" * len(mote_ids)),
            list(mote_ids),
        ):
            battery.setdefault(mote, []).append((utc, mv))
        trends = {}
        for mote, pts in battery.items():
            stamped = [(u, mv) for u, mv in pts if u is not None]
            if len(stamped) >= 2:
                (u0, v0), (u1, v1) = stamped[0], stamped[-1]
                days = max(1e-9, (u1 - u0) / 86400.0)
                trends[mote] = (v1 - v0) / days
        return {
            "rows": len(rows),
            "motes": len(set(r[0] for r in rows)),
            "timestamped_pct": (100.0 * timestamped / len(rows)) if rows else 100.0,
            "battery_trend_mv_per_day": trends,
        }


def _iso(utc: float | None) -> str:
    if utc is None:
        return ""
    dt = datetime.fromtimestamp(round(utc, 3), tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{int(dt.microsecond / 1000):03d}Z"
