"""The simulated deployment: event loop, commissioning, downloads, reports.

One World holds one scenario's motes, radio planes, environment, and the
real ingestion pipeline. Commands (advance, download, label, qc, report)
are serialized and logged; replaying the command log against the same
scenario reproduces the database bit for bit.
"""

from __future__ import annotations

import heapq
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path

from .mote import MoteState, step_mote
from .pipeline import DeploymentRegistry, Pipeline
from .protocols import ProtocolParams
from .qc import QcRuleSet, build_alerts, failure_breakdown, screen, yield_series
from .radio import NetworkView, RadioPlane
from .records import SettingsVolume
from .scenario import Environment, Scenario, load_scenario_file, parse_scenario
from .solar import SolarModel
from .tiers import CollectionPlan, basestation_download, coverage_report
from .timerec import reconstruct_clocks, reconstruct_unanchored
from .util import IntervalSet, make_rng

DAY_S = 86400.0


@dataclass
class AdvanceSummary:
    seconds: float
    samples: int = 0
    statuses: int = 0
    deaths: list[tuple] = field(default_factory=list)
    downloads: int = 0
    battery_min_mv: float = 0.0
    battery_mean_mv: float = 0.0

    def to_dict(self) -> dict:
        return {
            "seconds": self.seconds,
            "samples": self.samples,
            "statuses": self.statuses,
            "deaths": [list(d) for d in self.deaths],
            "downloads": self.downloads,
            "battery_min_mv": self.battery_min_mv,
            "battery_mean_mv": self.battery_mean_mv,
        }


class World:
    def __init__(self, scenario: Scenario, db_path: str = ":memory:"):
        self.scenario = scenario
        self.env = Environment(scenario)
        self.pipeline = Pipeline(db_path)
        self.registry = DeploymentRegistry()
        self.t = 0.0
        self.command_log: list[dict] = []
        self.session_counter = 0
        self.fault_injector = None
        self.protocol_params = ProtocolParams(**{
            k: v for k, v in scenario.protocol.items()
            if k in ProtocolParams.__dataclass_fields__
        })
        self.motes: dict[int, MoteState] = {}
        self.bs_router_received: dict[int, IntervalSet] = {}
        self.bs_leaf_coverage: dict[int, IntervalSet] = {}
        self.bs_watermark: dict[int, int] = {}
        self.bs_known_end: dict[int, int] = {}
        self.last_contact: dict[int, float] = {}
        self._events: list[tuple] = []
        self._event_seq = 0
        self._planes: dict = {}
        self._build()

    # --- construction -----------------------------------------------------

    def _build(self):
        sc = self.scenario
        for barcode, cfg in sorted(sc.motes.items()):
            mote = MoteState(cfg, seed=sc.seed, boot_time_s=0.0)
            f = mote.failure
            ramp_lo, ramp_hi = sc.failure["moisture_ramp_pct_per_day"]
            f.moisture_ramp_pct_per_day = make_rng(
                sc.seed, "moisture-ramp", barcode
            ).uniform(ramp_lo, ramp_hi)
            f.rain_jump_pct = sc.failure["rain_jump_pct"]
            f.hazards_per_day = {
                "moisture": sc.failure["moisture_hazard_per_day"],
                "software": sc.failure["software_hazard_per_day"],
                "unknown": sc.failure["unknown_hazard_per_day"],
            }
            self.motes[barcode] = mote
            if barcode not in sc.unlabeled_motes:
                self._commission(mote)
            if cfg.channels:
                self._schedule(cfg.sampling_interval_s, "sample", barcode)
            else:
                self._schedule(cfg.status_interval_s, "sample", barcode)
        if sc.auto_download_days:
            self._schedule(sc.auto_download_days * DAY_S, "auto_download", None)
        self._build_planes()

    def _commission(self, mote: MoteState):
        """Installation-stage labeling: registry rows, settings mirror, and
        the installer's clock anchor."""
        cfg = mote.config
        self.registry.label_device(cfg.barcode, "mote", {
            "patch": cfg.patch,
            "role": cfg.role,
            "position": list(cfg.position),
            "installed_epoch": self.scenario.start_epoch,
        })
        muxes = sorted({ch.multiplexer_id for ch in cfg.channels})
        for mux in muxes:
            if mux not in self.registry.multiplexers:
                self.registry.label_device(mux, "multiplexer", {"mote": cfg.barcode})
        assignments = {}
        for ch in cfg.channels:
            self.registry.label_device(ch.sensor_barcode, "sensor", {
                "sensor_type": ch.sensor_type, "depth_cm": ch.depth_cm,
            })
            self.registry.assign_sensor(
                ch.sensor_barcode, cfg.barcode, ch.multiplexer_id, ch.channel
            )
            assignments[(ch.multiplexer_id, ch.channel)] = (
                ch.sensor_barcode, ch.sensor_type
            )
        mote.settings = SettingsVolume(
            mote_barcode=cfg.barcode,
            multiplexer_barcodes=muxes,
            sensor_assignments=assignments,
            sampling_interval_s=cfg.sampling_interval_s,
        )
        self.pipeline.add_anchor(cfg.barcode, 0.0, self.scenario.start_epoch, "install")

    def _build_planes(self):
        sc = self.scenario
        for patch in sc.patches.values():
            members = patch.members + [sc.basestation]
            positions = {m: sc.motes[m].position for m in patch.members}
            positions[sc.basestation] = sc.basestation_position
            self._planes[("patch", patch.id)] = RadioPlane(
                members, positions, sc.bands["patch"], seed=sc.seed
            )
        routers = [p.router for p in sc.patches.values()]
        positions = {r: sc.motes[r].position for r in routers}
        positions[sc.basestation] = sc.basestation_position
        self._planes[("backbone",)] = RadioPlane(
            routers + [sc.basestation], positions, sc.bands["backbone"], seed=sc.seed
        )

    # --- views -------------------------------------------------------------

    def _view(self, plane_key) -> NetworkView:
        plane = self._planes[plane_key]
        plane.humidity_frac = self.env.humidity_frac(self.t)
        bs = self.scenario.basestation
        threshold = self.scenario.protocol.get("low_voltage_mv", 3100.0)

        def alive(n):
            return n == bs or self.motes[n].alive

        def data_tx_ok(n):
            return n == bs or self.motes[n].transmit_reliable(self.t, threshold)

        prr = plane.prr
        if plane_key[0] == "patch":
            # the basestation is mains powered with an elevated antenna:
            # its patch-band links carry to backbone range, which is what
            # makes the dead-router direct fallback feasible
            import math as _math

            from .radio import link_prr as _link_prr

            boosted = self.scenario.bands["backbone"]

            def prr(i, j, _plane=plane):
                if bs in (i, j):
                    xi, yi = _plane.positions[i]
                    xj, yj = _plane.positions[j]
                    d = _math.hypot(xi - xj, yi - yj)
                    return _link_prr(d, boosted, _plane.humidity_frac,
                                     _plane._offsets[(i, j)])
                return _plane.prr(i, j)

        return NetworkView(
            members=list(plane.members),
            prr=prr,
            alive=alive,
            data_tx_ok=data_tx_ok,
            log_of=lambda n: self.motes[n].log,
        )

    def patch_view(self, patch_id: int) -> NetworkView:
        return self._view(("patch", patch_id))

    def backbone_view(self) -> NetworkView:
        return self._view(("backbone",))

    def patches_in_scope(self, plan: CollectionPlan):
        sc = self.scenario
        if plan.scope == "deployment":
            return [sc.patches[k] for k in sorted(sc.patches)]
        if plan.scope == "patch":
            if plan.target not in sc.patches:
                raise ValueError(f"no patch {plan.target}")
            return [sc.patches[plan.target]]
        if plan.scope == "mote":
            if plan.target not in sc.motes:
                raise ValueError(f"no mote {plan.target}")
            return [sc.patches[k] for k in sorted(sc.patches)]
        raise ValueError(f"unknown scope {plan.scope!r}")

    # --- event loop ----------------------------------------------------------

    def _schedule(self, t: float, kind: str, payload):
        self._event_seq += 1
        heapq.heappush(self._events, (t, self._event_seq, kind, payload))

    @property
    def now_epoch(self) -> float:
        return self.scenario.start_epoch + self.t

    def next_session_rng(self):
        self.session_counter += 1
        return make_rng(self.scenario.seed, "session", self.session_counter)

    def apply_session_energy(self, session):
        for node, mc in sorted(session.energy_mc.items()):
            if node == self.scenario.basestation:
                continue   # mains powered
            self.motes[node].drain(mc, self.t)

    def advance(self, seconds: float, _record: bool = True) -> AdvanceSummary:
        if _record:
            self.command_log.append({"cmd": "advance", "seconds": seconds})
        deadline = self.t + seconds
        summary = AdvanceSummary(seconds=seconds)
        while self._events and self._events[0][0] <= deadline:
            t, _, kind, payload = heapq.heappop(self._events)
            self.t = t
            if kind == "sample":
                mote = self.motes[payload]
                events = step_mote(mote, self.env, t)
                for ev in events:
                    if ev[0] == "sample":
                        summary.samples += 1
                    elif ev[0] == "status":
                        summary.statuses += 1
                    elif ev[0] == "death":
                        summary.deaths.append(ev)
                if mote.alive:
                    interval = (mote.config.sampling_interval_s
                                if mote.config.channels
                                else mote.config.status_interval_s)
                    self._schedule(t + interval, "sample", payload)
            elif kind == "auto_download":
                self._run_plan(CollectionPlan(scope="deployment"))
                summary.downloads += 1
                self._schedule(t + self.scenario.auto_download_days * DAY_S,
                               "auto_download", None)
        self.t = deadline
        alive_v = [m.voltage_mv(self.t) for m in self.motes.values() if m.alive]
        summary.battery_min_mv = min(alive_v) if alive_v else 0.0
        summary.battery_mean_mv = (sum(alive_v) / len(alive_v)) if alive_v else 0.0
        return summary

    # --- operator commands -----------------------------------------------------

    def _run_plan(self, plan: CollectionPlan, progress_cb=None):
        report = basestation_download(self, plan, progress_cb)
        # anchors and cross references from this pass feed straight back
        # into the nullable UTC column
        self.reconstruct_timestamps(_record=False)
        return report

    def trigger_download(self, scope: str = "deployment", target: int | None = None,
                         protocol: str = "cxfs", progress_cb=None, _record: bool = True):
        if protocol not in ("cxfs", "koala", "flood"):
            raise ValueError(f"unknown protocol {protocol!r}")
        if _record:
            self.command_log.append({
                "cmd": "download", "scope": scope, "target": target,
                "protocol": protocol,
            })
        plan = CollectionPlan(scope=scope, target=target, protocol=protocol)
        return self._run_plan(plan, progress_cb)

    def note_contact(self, mote_id: int):
        self.last_contact[mote_id] = self.now_epoch

    def label(self, barcode: int, kind: str, attributes: dict | None = None,
              _record: bool = True):
        """Labeler command: register a device or wire a sensor assignment.

        Mirrors into the mote's settings volume; labeling a live mote also
        records the installer-laptop clock anchor.
        """
        if _record:
            self.command_log.append({
                "cmd": "label", "barcode": barcode, "kind": kind,
                "attributes": attributes or {},
            })
        if kind == "assignment":
            a = attributes or {}
            self.registry.assign_sensor(
                barcode, a["mote"], a["multiplexer"], a["channel"]
            )
            mote = self.motes.get(a["mote"])
            if mote is not None and mote.settings is not None:
                stype = self.registry.sensors[barcode]["sensor_type"]
                mote.settings.sensor_assignments[
                    (a["multiplexer"], a["channel"])
                ] = (barcode, stype)
            return {"assigned": barcode, **a}
        result = self.registry.label_device(barcode, kind, attributes)
        mote = self.motes.get(barcode)
        if kind == "mote" and mote is not None:
            if mote.settings is None:
                mote.settings = SettingsVolume(
                    mote_barcode=barcode,
                    multiplexer_barcodes=[],
                    sensor_assignments={},
                    sampling_interval_s=mote.config.sampling_interval_s,
                )
            self.pipeline.add_anchor(
                barcode, mote.local_seconds_f(self.t), self.now_epoch, "install"
            )
        return result

    def reconstruct_timestamps(self, _record: bool = True) -> dict:
        """Fit clocks from anchors and cross references; light fallback for
        segments that stay unanchored. Re-runnable."""
        if _record:
            self.command_log.append({"cmd": "reconstruct"})
        anchors = self.pipeline.anchor_points()
        refs = self.pipeline.cross_references()
        streams = self.pipeline.local_time_streams()
        fits = reconstruct_clocks(anchors, refs, streams)
        model = SolarModel(self.scenario.latitude_deg, self.scenario.longitude_deg)
        fallbacks = 0
        for mote_id, segments in fits.items():
            cfg = self.scenario.motes.get(mote_id)
            if cfg is None:
                continue
            light = [ch for ch in cfg.channels if ch.sensor_type == "apds9007_light"]
            for i, seg in enumerate(segments):
                if seg.anchored or not light:
                    continue
                ch = light[0]
                times, vals = self.pipeline.channel_trace(
                    mote_id, ch.multiplexer_id, ch.channel
                )
                pts = [(t, v) for t, v in zip(times, vals)
                       if seg.local_lo <= t <= seg.local_hi]
                if len(pts) < 10:
                    continue
                fallback = reconstruct_unanchored(
                    [t for t, _ in pts], [v for _, v in pts], model,
                    epoch_hint_s=self.scenario.start_epoch,
                    mote=mote_id, epoch=seg.epoch,
                )
                if fallback is not None:
                    fallback.local_lo = seg.local_lo
                    fallback.local_hi = seg.local_hi
                    segments[i] = fallback
                    fallbacks += 1
        self.pipeline.apply_clock_segments(fits)
        anchored = sum(s.anchored for segs in fits.values() for s in segs)
        total = sum(len(segs) for segs in fits.values())
        detail = [
            {
                "mote": seg.mote, "epoch": seg.epoch, "method": seg.method,
                "anchors": seg.anchors_used,
                "residual_rms_s": round(seg.residual_rms, 6),
                "rate_ok": seg.rate_ok,
            }
            for segs in fits.values() for seg in segs
        ]
        return {
            "segments": total,
            "anchored": anchored,
            "light_fallbacks": fallbacks,
            "residuals": detail,
        }

    # --- analytics ---------------------------------------------------------------

    def schedule_per_day(self) -> dict[int, float]:
        return {
            m: len(cfg.channels) * (DAY_S / cfg.sampling_interval_s)
            for m, cfg in self.scenario.motes.items()
        }

    def received_per_day(self) -> dict[tuple[int, int], int]:
        rows = self.pipeline.db.execute(
            "SELECT mote, CAST((utc - ?) / 86400.0 AS INTEGER) AS day, COUNT(*)"
            " FROM samples WHERE utc IS NOT NULL AND value_flag IS NULL"
            " GROUP BY mote, day",
            (self.scenario.start_epoch,),
        ).fetchall()
        return {(m, d): n for m, d, n in rows}

    def death_days(self) -> dict[int, int | None]:
        return {
            m: (int(mote.failure.died_at // DAY_S)
                if mote.failure.died_at is not None else None)
            for m, mote in self.motes.items()
        }

    def compute_yield(self, n_days: int | None = None):
        n = n_days or int(math.ceil(self.t / DAY_S))
        return yield_series(
            self.schedule_per_day(), self.received_per_day(), self.death_days(), n
        )

    def failure_breakdown(self) -> dict[str, float]:
        return failure_breakdown({m: s.failure for m, s in self.motes.items()})

    def coverage(self):
        return coverage_report(self)

    def sample_rows_for_qc(self) -> list[dict]:
        rows = []
        for mote, cookie, mux, ch, local, utc, value, flag in self.pipeline.db.execute(
            "SELECT mote, cookie, multiplexer, channel, local_time, utc, value,"
            " value_flag FROM samples ORDER BY mote, cookie"
        ):
            sensor = self.registry.sensor_at(mote, mux, ch) or {}
            cfg = self.scenario.motes.get(mote)
            rows.append({
                "mote": mote, "cookie": cookie, "multiplexer": mux, "channel": ch,
                "local_time": local, "utc": utc, "value": value,
                "value_flag": flag,
                "sensor_type": sensor.get("sensor_type"),
                "sampling_interval_s": cfg.sampling_interval_s if cfg else None,
            })
        return rows

    def qc_alerts(self, _record: bool = True):
        if _record:
            self.command_log.append({"cmd": "qc"})
        rules = QcRuleSet()
        rain = [(r - 3 * 3600 + self.scenario.start_epoch,
                 r + 9 * 3600 + self.scenario.start_epoch)
                for r in self.env.rain_times]
        result = screen(self.sample_rows_for_qc(), rules, rain_periods=rain)
        battery = {}
        for mote, mv in self.pipeline.db.execute(
            "SELECT mote, battery_mv FROM status ORDER BY mote, cookie"
        ):
            battery[mote] = mv
        alerts = build_alerts(
            {m: s.failure for m, s in self.motes.items()}, battery, result
        )
        return alerts, result

    def export_report(self, scope: str = "deployment", target: int | None = None,
                      t0: float | None = None, t1: float | None = None,
                      _record: bool = True):
        if _record:
            self.command_log.append({
                "cmd": "report", "scope": scope, "target": target,
                "t0": t0, "t1": t1,
            })
        sc = self.scenario
        if scope == "deployment":
            mote_ids = sorted(sc.motes)
        elif scope == "patch":
            patch = sc.patches[target]
            mote_ids = sorted(patch.members)
        elif scope == "mote":
            mote_ids = [target]
        else:
            raise ValueError(f"unknown scope {scope!r}")
        patch_of = {m: cfg.patch for m, cfg in sc.motes.items()}
        return self.pipeline.export_report(self.registry, mote_ids, patch_of, t0, t1)

    # --- state snapshots ----------------------------------------------------------

    def __getstate__(self):
        state = self.__dict__.copy()
        state["fault_injector"] = None   # injectors are in-process test hooks
        return state

    def save(self, path: str | Path):
        self.pipeline.db.commit()
        with open(path, "wb") as fh:
            pickle.dump(self, fh)

    @classmethod
    def restore(cls, path: str | Path) -> "World":
        with open(path, "rb") as fh:
            world = pickle.load(fh)
        return world

    def replay_commands(self, commands: list[dict]):
        for cmd in commands:
            kind = cmd["cmd"]
            if kind == "advance":
                self.advance(cmd["seconds"])
            elif kind == "download":
                self.trigger_download(cmd["scope"], cmd.get("target"),
                                      cmd.get("protocol", "cxfs"))
            elif kind == "label":
                self.label(cmd["barcode"], cmd["kind"], cmd.get("attributes"))
            elif kind == "reconstruct":
                self.reconstruct_timestamps()
            elif kind == "qc":
                self.qc_alerts()
            elif kind == "report":
                self.export_report(cmd["scope"], cmd.get("target"),
                                   cmd.get("t0"), cmd.get("t1"))
            else:
                raise ValueError(f"unknown command {kind!r}")


def load_scenario(source, db_path: str = ":memory:") -> World:
    """Build a world from a scenario file path or an already-parsed dict."""
    if isinstance(source, Scenario):
        scenario = source
    elif isinstance(source, dict):
        scenario = parse_scenario(source)
    else:
        scenario = load_scenario_file(source)
    return World(scenario, db_path=db_path)
