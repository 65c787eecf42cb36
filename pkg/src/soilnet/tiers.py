"""Multi-tier collection: routers harvest their patches, the basestation
harvests routers, and leaves are contacted directly only for data the
routers do not have.

Watermarks live on the router (its settings survive basestation absence):
for each leaf the router keeps the cookie up to which it has tunneled
contiguously, plus the leaf's advertised log end. The basestation reads
those watermarks during the backbone download, computes per-leaf coverage
from the tunneled records themselves, and issues recovery requests only
for the missing cookie ranges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .mote import MoteState, record_time_reference
from .pipeline import RawPacket
from .protocols import DownloadSession, run_download
from .records import TunneledRecord, decode_record, encode_record
from .scenario import Patch
from .util import IntervalSet

BIG_LENGTH = 1 << 31


@dataclass
class CollectionPlan:
    scope: str = "deployment"           # deployment | patch | mote
    target: int | None = None
    protocol: str = "cxfs"


@dataclass
class SessionSummary:
    source: int
    sink: int
    kind: str                           # intra-patch | backbone | leaf-recovery | direct
    protocol: str
    complete: bool
    records: int
    bytes: int
    slots: int
    energy_mc: float

    @classmethod
    def of(cls, session: DownloadSession, kind: str) -> "SessionSummary":
        return cls(
            source=session.source,
            sink=session.sink,
            kind=kind,
            protocol=session.protocol,
            complete=session.complete,
            records=len(session.entries),
            bytes=sum(len(f) for _, f in session.entries),
            slots=session.slots_used,
            energy_mc=session.total_energy_mc(),
        )


@dataclass
class DownloadReport:
    plan: CollectionPlan
    sessions: list[SessionSummary] = field(default_factory=list)
    ingested: int = 0
    duplicates: int = 0
    quarantined: int = 0
    per_mote: dict[int, dict] = field(default_factory=dict)

    def direct_leaf_sessions(self) -> list[SessionSummary]:
        return [s for s in self.sessions if s.kind in ("leaf-recovery", "direct")]


def _run_session(world, session: DownloadSession, view) -> DownloadSession:
    if world.fault_injector is not None:
        world.fault_injector(session)
    run_download(session, view, world.next_session_rng(), world.protocol_params)
    world.apply_session_energy(session)
    if session.complete or session.entries:
        world.note_contact(session.source)
        source = world.motes.get(session.source)
        if source is not None and session.sink == world.scenario.basestation:
            # contact with the basestation pins the mote's clock
            world.pipeline.add_anchor(
                session.source,
                source.local_seconds_f(world.t),
                world.now_epoch,
                source="download",
            )
    return session


def router_collect(world, patch: Patch, protocol: str = "cxfs") -> list[DownloadSession]:
    """Intra-patch harvest: one session per leaf from its watermark.

    Only the contiguous prefix of what arrives is tunneled, so the
    watermark never skips a hole and re-collection never duplicates a
    tunneled range. On success the router logs a time reference pairing
    its clock with the leaf's.
    """
    router = world.motes[patch.router]
    sessions = []
    if not router.alive:
        return sessions
    view = world.patch_view(patch.id)
    for leaf_id in patch.leaves:
        leaf = world.motes[leaf_id]
        if not leaf.alive:
            continue
        watermark, known_end = router.watermarks.get(leaf_id, [0, 0])
        session = DownloadSession(
            source=leaf_id, sink=patch.router,
            start_cookie=watermark, length=BIG_LENGTH, protocol=protocol,
        )
        _run_session(world, session, view)
        sessions.append(session)
        if session.gap_earliest is not None and session.gap_earliest > watermark:
            watermark = session.gap_earliest   # reclaimed data is gone; note and move on
        received = IntervalSet([(watermark, watermark)])
        received.update(session.received)
        contiguous_end = received.prefix_end(watermark)
        now_local = router.local_seconds(world.t)
        for cookie, frame in sorted(session.entries):
            if watermark <= cookie and cookie + len(frame) <= contiguous_end:
                router.log.append(TunneledRecord(
                    origin_mote=patch.router,
                    received_at_local_time=now_local,
                    inner=frame,
                ))
        router.watermarks[leaf_id] = [
            contiguous_end,
            max(known_end, session.source_end or 0),
        ]
        if session.entries:
            # clock exchange piggybacks on actual data transfer
            record_time_reference(router, world.t, neighbor=leaf)
    return sessions


def _ingest_session(world, session: DownloadSession, via: str, report: DownloadReport):
    packets = [
        RawPacket(
            raw=frame,
            arrival_time=world.now_epoch,
            source_path=via,
            via_router=None,
        )
        for _, frame in sorted(session.entries)
    ]
    stats = world.pipeline.ingest_batch(packets, world.registry)
    report.ingested += stats.inserted
    report.duplicates += stats.duplicates
    report.quarantined += stats.quarantined


def _leaf_coverage_update(world, session: DownloadSession):
    """Track what the basestation now holds per origin mote."""
    for cookie, frame in session.entries:
        rec = decode_record(frame)
        if isinstance(rec, TunneledRecord):
            inner = rec.inner_record()
            world.bs_leaf_coverage.setdefault(inner.origin_mote, IntervalSet()).add(
                inner.cookie, inner.cookie + len(rec.inner)
            )
        else:
            world.bs_leaf_coverage.setdefault(rec.origin_mote, IntervalSet()).add(
                cookie, cookie + len(frame)
            )


def _progress(world, report, progress_cb, done, total):
    if progress_cb:
        progress_cb(done, total, report)


def _backbone_pull(world, patch: Patch, plan, report: DownloadReport):
    """Pull the router's log (and recover holes) over the long-range tier."""
    bs = world.scenario.basestation
    view = world.backbone_view()
    start = world.bs_watermark.get(patch.router, 0)
    session = DownloadSession(
        source=patch.router, sink=bs,
        start_cookie=start, length=BIG_LENGTH, protocol=plan.protocol,
    )
    _run_session(world, session, view)
    report.sessions.append(SessionSummary.of(session, "backbone"))
    _ingest_session(world, session, "direct", report)
    _leaf_coverage_update(world, session)
    received = world.bs_router_received.setdefault(patch.router, IntervalSet())
    received.update(session.received)
    if session.gap_earliest is not None:
        start = max(start, session.gap_earliest)
    end = session.source_end if session.source_end is not None else start
    for gap_lo, gap_hi in received.gaps_within(start, end):
        rec_session = DownloadSession(
            source=patch.router, sink=bs,
            start_cookie=gap_lo, length=gap_hi - gap_lo, protocol=plan.protocol,
        )
        _run_session(world, rec_session, view)
        report.sessions.append(SessionSummary.of(rec_session, "backbone"))
        received.update(rec_session.received)
        _ingest_session(world, rec_session, "direct", report)
        _leaf_coverage_update(world, rec_session)
    world.bs_watermark[patch.router] = received.prefix_end(start)
    world.bs_known_end[patch.router] = max(world.bs_known_end.get(patch.router, 0), end)


def _leaf_recovery(world, patch: Patch, leaf_id: int, plan, report: DownloadReport):
    """Direct sessions for exactly the leaf ranges the router lacks."""
    bs = world.scenario.basestation
    router = world.motes[patch.router]
    wm, known_end = router.watermarks.get(leaf_id, [0, 0])
    coverage = world.bs_leaf_coverage.setdefault(leaf_id, IntervalSet())
    pview = world.patch_view(patch.id)
    for gap_lo, gap_hi in coverage.gaps_within(0, max(known_end, wm)):
        if not world.motes[leaf_id].alive:
            break
        session = DownloadSession(
            source=leaf_id, sink=bs,
            start_cookie=gap_lo, length=gap_hi - gap_lo, protocol=plan.protocol,
        )
        _run_session(world, session, pview)
        report.sessions.append(SessionSummary.of(session, "leaf-recovery"))
        coverage.update(session.received)
        _ingest_session(world, session, "direct", report)


def _leaf_direct(world, patch: Patch, leaf_id: int, plan, report: DownloadReport):
    """Dead-router fallback: the basestation pulls the leaf itself."""
    bs = world.scenario.basestation
    if not world.motes[leaf_id].alive:
        return
    coverage = world.bs_leaf_coverage.setdefault(leaf_id, IntervalSet())
    pview = world.patch_view(patch.id)
    session = DownloadSession(
        source=leaf_id, sink=bs,
        start_cookie=coverage.prefix_end(0), length=BIG_LENGTH,
        protocol=plan.protocol,
    )
    _run_session(world, session, pview)
    report.sessions.append(SessionSummary.of(session, "direct"))
    coverage.update(session.received)
    _ingest_session(world, session, "direct", report)


def basestation_download(world, plan: CollectionPlan, progress_cb=None) -> DownloadReport:
    """Run one collection plan: router-first, leaves only for what's missing.

    Mote scope skips the intra-patch harvest and contacts the one mote
    directly (backbone tier for routers, patch tier for leaves).
    """
    report = DownloadReport(plan=plan)
    patches = world.patches_in_scope(plan)

    if plan.scope == "mote":
        target = plan.target
        patch = next((p for p in patches
                      if target == p.router or target in p.leaves), None)
        if patch is None:
            raise ValueError(f"mote {target} is not in any patch")
        if target == patch.router:
            _backbone_pull(world, patch, plan, report)
        else:
            _leaf_direct(world, patch, target, plan, report)
        _fill_per_mote(world, [target], report)
        _progress(world, report, progress_cb, 1, 1)
        return report

    total_units = sum(1 + len(p.leaves) for p in patches) or 1
    done = 0
    for patch in patches:
        router = world.motes[patch.router]
        if router.alive:
            for s in router_collect(world, patch, plan.protocol):
                report.sessions.append(SessionSummary.of(s, "intra-patch"))
            _backbone_pull(world, patch, plan, report)
            done += 1
            _progress(world, report, progress_cb, done, total_units)
            for leaf_id in patch.leaves:
                _leaf_recovery(world, patch, leaf_id, plan, report)
                done += 1
                _progress(world, report, progress_cb, done, total_units)
        else:
            done += 1
            for leaf_id in patch.leaves:
                _leaf_direct(world, patch, leaf_id, plan, report)
                done += 1
                _progress(world, report, progress_cb, done, total_units)

    _fill_per_mote(world, [m for p in patches for m in p.members], report)
    _progress(world, report, progress_cb, total_units, total_units)
    return report


def _fill_per_mote(world, mote_ids, report: DownloadReport):
    for mote_id in mote_ids:
        if mote_id in world.bs_router_received:
            cov = world.bs_router_received[mote_id]
        else:
            cov = world.bs_leaf_coverage.get(mote_id)
        report.per_mote[mote_id] = {
            "received_bytes": cov.total() if cov else 0,
            "alive": world.motes[mote_id].alive,
        }


@dataclass
class CoverageInfo:
    mote: int
    expected: tuple[int, int]
    received: IntervalSet
    missing: list[tuple[int, int]]

    @property
    def complete(self) -> bool:
        return not self.missing


def coverage_report(world) -> dict[int, CoverageInfo]:
    """Expected-vs-received cookie ranges per mote.

    Expected is each mote's retained log span (the schedule determines it;
    death truncates it). Received is what the basestation holds, tunneled
    or direct.
    """
    out = {}
    for mote_id, mote in sorted(world.motes.items()):
        expected = (mote.log.earliest_cookie, mote.log.end_cookie)
        if mote_id in world.bs_router_received:
            received = world.bs_router_received[mote_id].copy()
        else:
            received = world.bs_leaf_coverage.get(mote_id, IntervalSet()).copy()
        missing = received.gaps_within(*expected)
        out[mote_id] = CoverageInfo(mote_id, expected, received, missing)
    return out
