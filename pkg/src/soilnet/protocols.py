"""Download protocols over the radio medium.

Three ways to pull a cookie range out of a mote's log:

- cxfs_download: concurrent transmission with forwarder selection. Hop
  fields from sink and source pick the band of nodes roughly between the
  two; packets ripple through that band with simultaneous identical
  retransmissions, so individual flaky links or a mute low-voltage node
  rarely matter.
- flood_download: the same relay with every node forwarding. Reliable and
  expensive; the upper baseline.
- source_route_download: a central single path chosen from link estimates.
  Any hop failure forces a whole-download retry, and a low-voltage node
  that still answers probes but cannot push data out poisons the route.

All three leave their results on the DownloadSession: received cookie
ranges are exact, partial transfers are preserved, and per-node energy is
accounted per slot.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .radio import HopField, NetworkView, concurrent_slot_delivery, flood_hopcount
from .records import LogGapError, LogRecord, decode_record, encode_record
from .util import IntervalSet

PROTOCOLS = ("cxfs", "koala", "flood")


@dataclass
class ProtocolParams:
    packet_max_records: int = 4
    packet_max_bytes: int = 64
    session_retries: int = 3
    data_retry_passes: int = 2
    hop_slack: int = 1
    flood_repetitions: int = 2
    per_hop_retries: int = 3
    tx_charge_mc: float = 0.06
    rx_charge_mc: float = 0.02
    relay_extra_slots: int = 8


class SourceUnreachableError(RuntimeError):
    pass


@dataclass
class ForwarderSet:
    source: int
    sink: int
    slack: int
    members: set[int]

    def __contains__(self, node: int) -> bool:
        return node in self.members


@dataclass
class SlotSchedule:
    """Slot layout of one session frame.

    Slots advance one at a time; within any slot every transmitter carries
    the identical packet, so concurrent retransmission reinforces instead
    of colliding. Built for accounting and inspection, phase by phase.
    """

    announcement_slots: int = 0
    request_slots: int = 0
    data_slots: int = 0
    ack_slots: int = 0

    @property
    def frame_length(self) -> int:
        return (self.announcement_slots + self.request_slots
                + self.data_slots + self.ack_slots)

    def add(self, phase: str, slots: int = 1) -> None:
        field_name = f"{phase}_slots"
        setattr(self, field_name, getattr(self, field_name) + slots)


def build_forwarder_set(
    hop_to_sink: HopField,
    hop_to_source: HopField,
    source: int,
    sink: int,
    slack: int,
) -> ForwarderSet:
    """Nodes whose hop sums place them roughly between source and sink.

    n is a forwarder iff hop_sink(n) + hop_source(n) <= hop_sink(source) + slack.
    """
    base = hop_to_sink.hop(source)
    if math.isinf(base):
        raise SourceUnreachableError(
            f"source {source} unreachable from sink {sink}"
        )
    members = {
        n
        for n in hop_to_sink.hops
        if hop_to_sink.hop(n) + hop_to_source.hop(n) <= base + slack
    }
    members.add(source)
    members.add(sink)
    return ForwarderSet(source=source, sink=sink, slack=slack, members=members)


@dataclass
class DownloadSession:
    """State of one basestation- or router-driven retrieval."""

    source: int
    sink: int
    start_cookie: int
    length: int
    protocol: str = "cxfs"
    entries: list[tuple[int, bytes]] = field(default_factory=list)
    received: IntervalSet = field(default_factory=IntervalSet)
    source_end: int | None = None
    gap_earliest: int | None = None
    resynced: bool = False
    complete: bool = False
    attempts: int = 0
    slots_used: int = 0
    schedule: SlotSchedule = field(default_factory=SlotSchedule)
    energy_mc: dict[int, float] = field(default_factory=dict)
    abort_after_packets: int | None = None   # fault injection for recovery tests

    @property
    def requested(self) -> IntervalSet:
        return IntervalSet([(self.start_cookie, self.start_cookie + self.length)])

    def records(self) -> list[LogRecord]:
        return [decode_record(frame) for _, frame in self.entries]

    def charge(self, node: int, mc: float) -> None:
        self.energy_mc[node] = self.energy_mc.get(node, 0.0) + mc

    def total_energy_mc(self) -> float:
        return sum(self.energy_mc.values())

    def _accept(self, cookie: int, frame: bytes) -> None:
        if not self.received.covers(cookie, cookie + len(frame)):
            self.entries.append((cookie, frame))
            self.received.add(cookie, cookie + len(frame))


def pack_records(
    entries: list[tuple[int, bytes]], params: ProtocolParams
) -> list[list[tuple[int, bytes]]]:
    """Greedy packetization: at most N records and B payload bytes each."""
    packets: list[list[tuple[int, bytes]]] = []
    current: list[tuple[int, bytes]] = []
    size = 0
    for cookie, frame in entries:
        if current and (
            len(current) >= params.packet_max_records
            or size + len(frame) > params.packet_max_bytes
        ):
            packets.append(current)
            current, size = [], 0
        current.append((cookie, frame))
        size += len(frame)
    if current:
        packets.append(current)
    return packets


def _read_source_log(session: DownloadSession, view: NetworkView):
    """Pull the requested range out of the source's log, noting gaps."""
    log = view.log_of(session.source)
    start = session.start_cookie
    try:
        res = log.read_range(start, session.length)
    except LogGapError as err:
        session.gap_earliest = err.earliest
        start = err.earliest
        res = log.read_range(start, max(0, session.start_cookie + session.length - start))
    session.resynced = session.resynced or res.resynced
    session.source_end = log.end_cookie
    return [(r.cookie, encode_record(r)) for r in res.records]


def _relay_packet(
    initiator: int,
    target: int,
    members: list[int],
    view: NetworkView,
    rng,
    params: ProtocolParams,
    session: DownloadSession,
    data: bool,
) -> bool:
    """Glossy-style ripple of one packet through `members` toward `target`.

    Every holder retransmits once, simultaneously with the rest of its
    wave; all identical, so no self-interference. Data transmissions from
    low-voltage nodes silently fail (they still relay control traffic).
    """
    have = {initiator}
    fresh = [initiator]
    budget = len(members) + params.relay_extra_slots
    alive_members = [n for n in members if view.alive(n)]
    phase = "data" if data else "request"
    for _ in range(budget):
        if target in have or not fresh:
            break
        txs = [n for n in fresh if view.alive(n) and (not data or view.data_tx_ok(n))]
        if not txs:
            break
        session.slots_used += 1
        session.schedule.add(phase)
        receivers = [n for n in alive_members if n not in have]
        got = concurrent_slot_delivery(txs, receivers, view, rng)
        for n in alive_members:
            session.charge(n, params.tx_charge_mc if n in txs else params.rx_charge_mc)
        have |= got
        fresh = sorted(got)
    return target in have


def _run_banded_download(
    session: DownloadSession,
    view: NetworkView,
    rng,
    params: ProtocolParams,
    members_for_attempt,
) -> DownloadSession:
    """Shared engine for cxfs (banded members) and flood (all members)."""
    delivered_packets = 0
    members = None
    for _ in range(params.session_retries):
        session.attempts += 1
        if members is None:  # fresh hop fields only when the last try failed
            members = members_for_attempt(session, view, rng)
        if members is None:
            continue
        if session.sink not in members or not view.alive(session.source):
            members = None
            continue
        # request travels sink -> source as control traffic
        if not _relay_packet(
            session.sink, session.source, members, view, rng, params, session, data=False
        ):
            members = None
            continue
        entries = _read_source_log(session, view)
        pending = [
            pkt
            for pkt in pack_records(entries, params)
            if not all(session.received.covers(c, c + len(f)) for c, f in pkt)
        ]
        aborted = False
        for _pass in range(1 + params.data_retry_passes):
            still = []
            for pkt in pending:
                if (
                    session.abort_after_packets is not None
                    and delivered_packets >= session.abort_after_packets
                ):
                    aborted = True
                    break
                ok = _relay_packet(
                    session.source,
                    session.sink,
                    members,
                    view,
                    rng,
                    params,
                    session,
                    data=True,
                )
                if ok:
                    delivered_packets += 1
                    for cookie, frame in pkt:
                        session._accept(cookie, frame)
                else:
                    still.append(pkt)
            pending = still
            # the sink acknowledges the burst; missing packets retry
            session.slots_used += 1
            session.schedule.add("ack")
            if aborted or not pending:
                break
        if aborted:
            break
        if not pending:
            session.complete = True
            break
        members = None
    return session


def cxfs_download(
    session: DownloadSession, view: NetworkView, rng, params: ProtocolParams | None = None
) -> DownloadSession:
    params = params or ProtocolParams()

    def banded_members(sess, v, r):
        try:
            hop_sink = flood_hopcount(
                sess.sink, v, r, params.flood_repetitions,
                energy_mc=sess.energy_mc,
                tx_charge_mc=params.tx_charge_mc, rx_charge_mc=params.rx_charge_mc,
            )
            hop_src = flood_hopcount(
                sess.source, v, r, params.flood_repetitions,
                energy_mc=sess.energy_mc,
                tx_charge_mc=params.tx_charge_mc, rx_charge_mc=params.rx_charge_mc,
            )
        except ValueError:
            return None
        sess.slots_used += 2 * params.flood_repetitions
        sess.schedule.add("announcement", 2 * params.flood_repetitions)
        try:
            fwd = build_forwarder_set(
                hop_sink, hop_src, sess.source, sess.sink, params.hop_slack
            )
        except SourceUnreachableError:
            return None
        return sorted(fwd.members)

    session.protocol = "cxfs"
    return _run_banded_download(session, view, rng, params, banded_members)


def flood_download(
    session: DownloadSession, view: NetworkView, rng, params: ProtocolParams | None = None
) -> DownloadSession:
    params = params or ProtocolParams()

    def all_members(sess, v, r):
        return [n for n in v.members if v.alive(n)]

    session.protocol = "flood"
    return _run_banded_download(session, view, rng, params, all_members)


def best_route(view: NetworkView, start: int, goal: int, floor: float = 0.02):
    """Most-reliable path by link estimates (Dijkstra on -log prr).

    This is the central route computation: it sees link quality but not
    node health, so a low-voltage node looks as good as its links.
    """
    alive = [n for n in view.members if view.alive(n)]
    dist = {start: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, start)]
    seen = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in seen:
            continue
        seen.add(u)
        if u == goal:
            break
        for v in alive:
            if v == u:
                continue
            p = view.prr(u, v)
            if p < floor:
                continue
            nd = d - math.log(p)
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if goal not in seen:
        return None
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return list(reversed(path))


def _hop_transfer(
    a: int, b: int, view: NetworkView, rng, params: ProtocolParams,
    session: DownloadSession, data: bool,
) -> bool:
    """Point-to-point hop with per-hop retries; data from a low-voltage
    transmitter never arrives (it still spends the transmission energy)."""
    for _ in range(params.per_hop_retries):
        session.slots_used += 1
        session.charge(a, params.tx_charge_mc)
        session.charge(b, params.rx_charge_mc)
        if data and not view.data_tx_ok(a):
            continue
        if rng.random() < view.prr(a, b):
            return True
    return False


def source_route_download(
    session: DownloadSession,
    view: NetworkView,
    rng,
    params: ProtocolParams | None = None,
    route: list[int] | None = None,
) -> DownloadSession:
    params = params or ProtocolParams()
    session.protocol = "koala"
    route = route or best_route(view, session.sink, session.source)
    if route is None or not view.alive(session.source):
        return session
    for _ in range(params.session_retries):
        session.attempts += 1
        # request: sink -> source along the route (control traffic)
        ok = all(
            _hop_transfer(a, b, view, rng, params, session, data=False)
            for a, b in zip(route, route[1:])
        )
        if not ok:
            continue
        entries = _read_source_log(session, view)
        packets = pack_records(entries, params)
        back = list(reversed(route))
        failed = False
        staged: list[tuple[int, bytes]] = []
        for pkt in packets:
            for a, b in zip(back, back[1:]):
                if not _hop_transfer(a, b, view, rng, params, session, data=True):
                    failed = True
                    break
            if failed:
                break
            staged.extend(pkt)
        if failed:
            continue  # any hop failure retries the whole download
        for cookie, frame in staged:
            session._accept(cookie, frame)
        session.complete = True
        break
    return session


def run_download(
    session: DownloadSession, view: NetworkView, rng,
    params: ProtocolParams | None = None,
) -> DownloadSession:
    if session.protocol == "cxfs":
        return cxfs_download(session, view, rng, params)
    if session.protocol == "flood":
        return flood_download(session, view, rng, params)
    if session.protocol == "koala":
        return source_route_download(session, view, rng, params)
    raise ValueError(f"unknown protocol {session.protocol!r}")
