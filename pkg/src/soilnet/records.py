"""Log record types and the byte-exact storage/wire format.

Every mote keeps an append-only log of framed records; the identical
encoding travels over the radio and into the ingestion pipeline. A record
is addressed by its cookie: the byte offset of its frame in the mote's
logical log stream. Cookies are strictly monotone per mote and never
reused.

Frame layout, all fields little-endian:

    offset  size  field
    0       1     record type
    1       2     payload length in bytes
    3       2     origin mote id
    5       4     cookie
    9       n     payload

Payload layouts per record type are documented in docs/wire_format.md,
with golden fixtures under tests/data/.
"""

from __future__ import annotations

import bisect
import struct
from dataclasses import dataclass, replace
from enum import IntEnum

HEADER_LEN = 9
MAX_PAYLOAD = 255
ADC_MAX = 4095              # 12-bit converter
TICKS_PER_SECOND = 32768    # watch-crystal tick rate
DEFAULT_LOG_CAPACITY = 8 * 1024 * 1024   # 64 Mbit serial flash
ERASE_UNIT = 64 * 1024

_HEADER = struct.Struct("<BHHI")
_SAMPLE = struct.Struct("<IBHII")
_STATUS = struct.Struct("<HBhI")


class RecordType(IntEnum):
    SAMPLE = 1
    STATUS = 2
    TIME_REFERENCE = 3
    TUNNELED = 4


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    """Structured decode failure naming the byte offset and cause.

    Carries the offending raw bytes so the pipeline can quarantine them.
    """

    def __init__(self, offset: int, cause: str, raw: bytes = b""):
        super().__init__(f"decode failed at offset {offset}: {cause}")
        self.offset = offset
        self.cause = cause
        self.raw = raw


class LogGapError(LookupError):
    """Requested cookie is older than the retained region."""

    def __init__(self, requested: int, earliest: int):
        super().__init__(
            f"cookie {requested} reclaimed; earliest available is {earliest}"
        )
        self.requested = requested
        self.earliest = earliest


@dataclass(frozen=True)
class SampleRecord:
    origin_mote: int
    multiplexer_id: int
    channel: int
    raw_adc: int
    local_time: int        # whole seconds since mote boot
    sequence: int
    cookie: int = 0

    record_type = RecordType.SAMPLE

    def invariant_error(self) -> str | None:
        if not 0 <= self.channel < 8:
            return f"channel {self.channel} outside 0-7"
        if not 0 <= self.raw_adc <= ADC_MAX:
            return f"raw_adc {self.raw_adc} outside 12-bit range"
        return None


@dataclass(frozen=True)
class StatusRecord:
    origin_mote: int
    battery_millivolts: int
    enclosure_humidity_pct: int
    internal_temp_centi_c: int
    local_time: int
    cookie: int = 0

    record_type = RecordType.STATUS

    def invariant_error(self) -> str | None:
        if not 0 <= self.battery_millivolts <= 4200:
            return f"battery {self.battery_millivolts} mV outside [0, 4200]"
        if not 0 <= self.enclosure_humidity_pct <= 100:
            return f"humidity {self.enclosure_humidity_pct}% outside [0, 100]"
        return None


@dataclass(frozen=True)
class TimeReferenceRecord:
    """Pairing of a mote's local clock with an external reference.

    Either a global timestamp (the source had a reliable clock), a
    neighbor's simultaneous local reading, or both. Sub-second precision
    is carried as ticks within the current second.
    """

    origin_mote: int
    local_time: int
    local_sub_ticks: int = 0
    global_time: int | None = None
    neighbor_id: int | None = None
    neighbor_local_time: int | None = None
    neighbor_sub_ticks: int = 0
    cookie: int = 0

    record_type = RecordType.TIME_REFERENCE

    def has_neighbor(self) -> bool:
        return self.neighbor_id is not None and self.neighbor_local_time is not None

    def invariant_error(self) -> str | None:
        if self.global_time is None and not self.has_neighbor():
            return "time reference carries neither a global time nor a neighbor pair"
        if (self.neighbor_id is None) != (self.neighbor_local_time is None):
            return "neighbor id and neighbor local time must appear together"
        if not 0 <= self.local_sub_ticks < TICKS_PER_SECOND:
            return f"sub ticks {self.local_sub_ticks} outside one second"
        return None

    def local_seconds(self) -> float:
        return self.local_time + self.local_sub_ticks / TICKS_PER_SECOND

    def neighbor_seconds(self) -> float:
        return self.neighbor_local_time + self.neighbor_sub_ticks / TICKS_PER_SECOND


@dataclass(frozen=True)
class TunneledRecord:
    """A leaf record held verbatim inside a router's log.

    `inner` is the complete original frame (header included), so the leaf's
    own origin id and cookie survive the relay. Nesting depth is one.
    """

    origin_mote: int       # the router that appended the tunnel record
    received_at_local_time: int
    inner: bytes
    cookie: int = 0

    record_type = RecordType.TUNNELED

    @property
    def tunnel_router_id(self) -> int:
        return self.origin_mote

    def inner_record(self) -> "LogRecord":
        return decode_record(self.inner)

    def invariant_error(self) -> str | None:
        if len(self.inner) < HEADER_LEN:
            return "tunneled payload shorter than a record header"
        return None


LogRecord = SampleRecord | StatusRecord | TimeReferenceRecord | TunneledRecord


@dataclass
class SettingsVolume:
    """The settings half of a mote's flash: identity and channel wiring.

    Mirrors the registry entries pushed by the labeler; the log records
    half lives in MoteLog.
    """

    mote_barcode: int
    multiplexer_barcodes: list[int]
    sensor_assignments: dict[tuple[int, int], tuple[int, str]]  # (mux, ch) -> (sensor, type)
    sampling_interval_s: float
    radio_channel: int = 0

    def validate(self) -> None:
        if self.sampling_interval_s <= 0:
            raise ValueError("sampling interval must be positive")
        sensors = [s for s, _ in self.sensor_assignments.values()]
        if len(sensors) != len(set(sensors)):
            raise ValueError("a sensor barcode is wired to two channels")

    def to_dict(self) -> dict:
        return {
            "mote_barcode": self.mote_barcode,
            "multiplexer_barcodes": list(self.multiplexer_barcodes),
            "sensor_assignments": {
                f"{mux}:{ch}": [sensor, stype]
                for (mux, ch), (sensor, stype) in sorted(self.sensor_assignments.items())
            },
            "sampling_interval_s": self.sampling_interval_s,
            "radio_channel": self.radio_channel,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SettingsVolume":
        assignments = {}
        for key, (sensor, stype) in data.get("sensor_assignments", {}).items():
            mux, ch = key.split(":")
            assignments[(int(mux), int(ch))] = (int(sensor), str(stype))
        vol = cls(
            mote_barcode=int(data["mote_barcode"]),
            multiplexer_barcodes=[int(x) for x in data.get("multiplexer_barcodes", [])],
            sensor_assignments=assignments,
            sampling_interval_s=float(data["sampling_interval_s"]),
            radio_channel=int(data.get("radio_channel", 0)),
        )
        vol.validate()
        return vol

_TIMEREF_HAS_GLOBAL = 0x01
_TIMEREF_HAS_NEIGHBOR = 0x02


def _encode_payload(record: LogRecord) -> bytes:
    if isinstance(record, SampleRecord):
        return _SAMPLE.pack(
            record.multiplexer_id,
            record.channel,
            record.raw_adc,
            record.local_time,
            record.sequence,
        )
    if isinstance(record, StatusRecord):
        return _STATUS.pack(
            record.battery_millivolts,
            record.enclosure_humidity_pct,
            record.internal_temp_centi_c,
            record.local_time,
        )
    if isinstance(record, TimeReferenceRecord):
        flags = 0
        parts = [b""]
        if record.global_time is not None:
            flags |= _TIMEREF_HAS_GLOBAL
            parts.append(struct.pack("<I", record.global_time))
        if record.has_neighbor():
            flags |= _TIMEREF_HAS_NEIGHBOR
            parts.append(
                struct.pack(
                    "<HIH",
                    record.neighbor_id,
                    record.neighbor_local_time,
                    record.neighbor_sub_ticks,
                )
            )
        parts[0] = struct.pack("<BIH", flags, record.local_time, record.local_sub_ticks)
        return b"".join(parts)
    if isinstance(record, TunneledRecord):
        return struct.pack("<I", record.received_at_local_time) + record.inner
    raise EncodeError(f"unknown record class {type(record).__name__}")


def encode_record(record: LogRecord) -> bytes:
    """Serialize one record to its frame bytes. Deterministic."""
    problem = record.invariant_error()
    if problem:
        raise EncodeError(problem)
    payload = _encode_payload(record)
    if len(payload) > MAX_PAYLOAD:
        raise EncodeError(
            f"payload length {len(payload)} exceeds {MAX_PAYLOAD} bytes"
        )
    if isinstance(record, TunneledRecord):
        inner = decode_record(record.inner)  # raises DecodeError on bad inner
        if isinstance(inner, TunneledRecord):
            raise EncodeError("tunnel nesting depth is limited to one")
    header = _HEADER.pack(
        int(record.record_type), len(payload), record.origin_mote, record.cookie
    )
    return header + payload


def _decode_at(buf: bytes, offset: int) -> tuple[LogRecord, int]:
    """Parse one record at `offset`; returns (record, offset past frame)."""
    if len(buf) - offset < HEADER_LEN:
        raise DecodeError(offset, "truncated header", bytes(buf[offset:]))
    rtype, paylen, origin, cookie = _HEADER.unpack_from(buf, offset)
    frame_raw = bytes(buf[offset : offset + HEADER_LEN + paylen])
    if rtype not in RecordType._value2member_map_:
        raise DecodeError(offset, f"unknown record type 0x{rtype:02x}", frame_raw)
    if paylen > MAX_PAYLOAD:
        raise DecodeError(offset, f"payload length {paylen} exceeds {MAX_PAYLOAD}", frame_raw)
    body_off = offset + HEADER_LEN
    if len(buf) - body_off < paylen:
        raise DecodeError(body_off, f"truncated payload: {paylen} bytes claimed, "
                          f"{len(buf) - body_off} present", frame_raw)
    payload = bytes(buf[body_off : body_off + paylen])
    try:
        record = _decode_payload(RecordType(rtype), origin, cookie, payload, body_off)
    except struct.error:
        raise DecodeError(body_off, "payload too short for its record type", frame_raw)
    problem = record.invariant_error()
    if problem:
        raise DecodeError(body_off, problem, frame_raw)
    return record, body_off + paylen


def _decode_payload(
    rtype: RecordType, origin: int, cookie: int, payload: bytes, body_off: int
) -> LogRecord:
    if rtype is RecordType.SAMPLE:
        if len(payload) != _SAMPLE.size:
            raise DecodeError(body_off, f"sample payload must be {_SAMPLE.size} bytes")
        mux, channel, raw_adc, local, seq = _SAMPLE.unpack(payload)
        return SampleRecord(origin, mux, channel, raw_adc, local, seq, cookie)
    if rtype is RecordType.STATUS:
        if len(payload) != _STATUS.size:
            raise DecodeError(body_off, f"status payload must be {_STATUS.size} bytes")
        batt, hum, temp, local = _STATUS.unpack(payload)
        return StatusRecord(origin, batt, hum, temp, local, cookie)
    if rtype is RecordType.TIME_REFERENCE:
        flags, local, sub = struct.unpack_from("<BIH", payload, 0)
        pos = 7
        global_time = None
        neighbor = (None, None, 0)
        if flags & _TIMEREF_HAS_GLOBAL:
            (global_time,) = struct.unpack_from("<I", payload, pos)
            pos += 4
        if flags & _TIMEREF_HAS_NEIGHBOR:
            neighbor = struct.unpack_from("<HIH", payload, pos)
            pos += 8
        if pos != len(payload):
            raise DecodeError(body_off, "time reference payload length mismatch")
        return TimeReferenceRecord(
            origin, local, sub, global_time,
            neighbor[0], neighbor[1], neighbor[2], cookie,
        )
    # TUNNELED
    if len(payload) < 4 + HEADER_LEN:
        raise DecodeError(body_off, "tunneled payload too short for an inner record")
    (recv_local,) = struct.unpack_from("<I", payload, 0)
    inner = payload[4:]
    try:
        inner_rec, consumed = _decode_at(inner, 0)
    except DecodeError as err:
        raise DecodeError(body_off + 4 + err.offset, f"bad inner record: {err.cause}")
    if consumed != len(inner):
        raise DecodeError(body_off + 4 + consumed, "trailing bytes after inner record")
    if isinstance(inner_rec, TunneledRecord):
        raise DecodeError(body_off + 4, "tunnel nesting depth exceeds one")
    return TunneledRecord(origin, recv_local, inner, cookie)


def decode_record(data: bytes) -> LogRecord:
    """Parse exactly one record; total over arbitrary input.

    Raises DecodeError (never anything else) on malformed bytes.
    """
    record, end = _decode_at(data, 0)
    if end != len(data):
        raise DecodeError(end, f"{len(data) - end} trailing bytes after record")
    return record


def iter_records(data: bytes):
    """Yield (offset, record) for each frame in a concatenated buffer."""
    offset = 0
    while offset < len(data):
        record, nxt = _decode_at(data, offset)
        yield offset, record
        offset = nxt


def frame_length(data: bytes, offset: int = 0) -> int:
    """Frame size of the record at `offset` (header peek)."""
    if len(data) - offset < HEADER_LEN:
        raise DecodeError(offset, "truncated header")
    (paylen,) = struct.unpack_from("<H", data, offset + 1)
    return HEADER_LEN + paylen


@dataclass
class ReadResult:
    records: list[LogRecord]
    next_cookie: int
    resynced: bool = False


class MoteLog:
    """Append-only record log with ring reclamation at erase-unit granularity.

    Single writer. Cookies address bytes in the logical stream; when the
    flash fills, whole erase units are reclaimed oldest-first and the
    earliest retained cookie advances.
    """

    def __init__(self, capacity: int = DEFAULT_LOG_CAPACITY, erase_unit: int = ERASE_UNIT):
        if capacity < 2 * erase_unit:
            raise ValueError("capacity must be at least two erase units")
        self.capacity = capacity
        self.erase_unit = erase_unit
        self.reclaimed_units = 0
        self._buf = bytearray()
        self._buf_base = 0          # cookie of _buf[0]
        self._offsets: list[int] = []   # start cookies of retained whole records
        self._end = 0

    @property
    def end_cookie(self) -> int:
        return self._end

    @property
    def earliest_cookie(self) -> int:
        return self._offsets[0] if self._offsets else self._end

    @property
    def record_count(self) -> int:
        return len(self._offsets)

    def append(self, record: LogRecord) -> int:
        """Append a record; returns its cookie (the previous end offset)."""
        data = encode_record(replace(record, cookie=self._end))
        if len(data) > self.capacity - self.erase_unit:
            raise EncodeError("record larger than the reclaimable log capacity")
        while self._end + len(data) - self._buf_base > self.capacity:
            self._reclaim_unit()
        cookie = self._end
        self._buf += data
        self._offsets.append(cookie)
        self._end += len(data)
        return cookie

    def _reclaim_unit(self) -> None:
        del self._buf[: self.erase_unit]
        self._buf_base += self.erase_unit
        keep = bisect.bisect_left(self._offsets, self._buf_base)
        del self._offsets[:keep]
        self.reclaimed_units += 1

    def read_range(self, cookie: int, length: int) -> ReadResult:
        """All whole records in [cookie, cookie + length).

        A partial trailing record is excluded. A cookie pointing inside a
        record resyncs to the next frame and sets the `resynced` flag; a
        cookie older than the retained region raises LogGapError.
        """
        earliest = self.earliest_cookie
        if cookie < earliest:
            raise LogGapError(cookie, earliest)
        if cookie >= self._end:
            return ReadResult([], cookie)
        i = bisect.bisect_left(self._offsets, cookie)
        resynced = i >= len(self._offsets) or self._offsets[i] != cookie
        limit = cookie + length
        records: list[LogRecord] = []
        last_end = None
        for off in self._offsets[i:]:
            pos = off - self._buf_base
            size = frame_length(self._buf, pos)
            if off + size > limit:
                break
            rec, _ = _decode_at(self._buf, pos)
            records.append(rec)
            last_end = off + size
        if last_end is not None:
            next_cookie = last_end
        elif i < len(self._offsets):
            next_cookie = self._offsets[i]
        else:
            next_cookie = self._end
        return ReadResult(records, next_cookie, resynced)

    def read_all(self) -> list[LogRecord]:
        return self.read_range(self.earliest_cookie, self._end - self.earliest_cookie).records

    def retained_bytes(self) -> bytes:
        """Byte-exact retained tail starting at earliest_cookie (debug aid)."""
        start = self.earliest_cookie - self._buf_base
        return bytes(self._buf[start:])
