"""Scenario files: deployment layout, environment traces, and validation.

A scenario is a JSON document naming every mote, patch, band profile, and
environment parameter; a (scenario, seed) pair fully determines a run.
Validation is exhaustive: all schema violations are reported at once.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path

from .mote import ChannelConfig, MoteConfig
from .radio import BandProfile
from .sensors import SENSOR_TYPES
from .solar import sun_elevation_sin
from .util import make_rng

DAY_S = 86400.0
YEAR_S = 365.0 * DAY_S


class ScenarioError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("scenario invalid:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class Patch:
    id: int
    router: int
    leaves: list[int]

    @property
    def members(self) -> list[int]:
        return [self.router] + list(self.leaves)


@dataclass
class Scenario:
    name: str
    seed: int
    start_epoch: float
    duration_days: float
    latitude_deg: float
    longitude_deg: float
    bands: dict[str, BandProfile]
    basestation: int
    basestation_position: tuple[float, float]
    patches: dict[int, Patch]
    motes: dict[int, MoteConfig]
    environment: dict
    failure: dict
    protocol: dict
    auto_download_days: float | None = None
    unlabeled_motes: set[int] = field(default_factory=set)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def duration_s(self) -> float:
        return self.duration_days * DAY_S

    def patch_of(self, mote: int) -> int | None:
        cfg = self.motes.get(mote)
        return cfg.patch if cfg else None


ENV_DEFAULTS = {
    "rain_mean_interval_days": 5.0,
    "rain_vwc_jump": 0.08,
    "rain_decay_days": 3.0,
    "vwc_base_min": 0.12,
    "vwc_base_max": 0.32,
    "vwc_seasonal_amp": 0.03,
    "humidity_base_pct": 55.0,
    "humidity_swing_pct": 25.0,
    "soil_temp_mean_c": 12.0,
    "soil_temp_annual_amp_c": 10.0,
    "soil_temp_daily_amp_c": 4.0,
    "enclosure_temp_mean_c": 18.0,
    "enclosure_temp_daily_amp_c": 14.0,
    "enclosure_greenhouse_boost_c": 12.0,
}

FAILURE_DEFAULTS = {
    "moisture_hazard_per_day": 0.0,
    "software_hazard_per_day": 0.0,
    "unknown_hazard_per_day": 0.0,
    "moisture_ramp_pct_per_day": [0.05, 0.25],
    "rain_jump_pct": 0.8,
    "battery_capacity_spread": 0.0,
    "drift_ppm_range": [-50.0, 50.0],
}


class Environment:
    """Deterministic field conditions derived from (scenario, seed).

    Rain events are drawn once at load; every query after that is a pure
    function of time, so the simulation stays replayable.
    """

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        p = {**ENV_DEFAULTS, **scenario.environment}
        self.p = p
        rng = make_rng(scenario.seed, "rain")
        self.rain_times: list[float] = []
        t = rng.expovariate(1.0 / (p["rain_mean_interval_days"] * DAY_S))
        while t < scenario.duration_s:
            self.rain_times.append(t)
            t += rng.expovariate(1.0 / (p["rain_mean_interval_days"] * DAY_S))

    # --- helpers ---------------------------------------------------------

    def _hour(self, t: float) -> float:
        return ((self.sc.start_epoch + t) / 3600.0) % 24.0

    def _doy(self, t: float) -> float:
        return (((self.sc.start_epoch + t) / DAY_S) % 365.0) + 1.0

    def rain_event_count(self, t0: float, t1: float) -> int:
        return bisect_right(self.rain_times, t1) - bisect_right(self.rain_times, t0)

    def raining(self, t: float, window_s: float = 6 * 3600.0) -> bool:
        i = bisect_left(self.rain_times, t)
        for j in (i - 1, i):
            if 0 <= j < len(self.rain_times) and abs(self.rain_times[j] - t) <= window_s:
                return True
        return False

    def rain_impulse(self, t: float) -> float:
        tau = self.p["rain_decay_days"] * DAY_S
        total = 0.0
        i = bisect_right(self.rain_times, t)
        for j in range(i - 1, max(-1, i - 12), -1):
            contrib = math.exp(-(t - self.rain_times[j]) / tau)
            total += contrib
            if contrib < 1e-3:
                break
        return total

    # --- queried by motes --------------------------------------------------

    def true_value(self, sensor_type: str, key, t: float) -> float:
        mote, depth = key
        if sensor_type == "ec5_vwc":
            u = make_rng(self.sc.seed, "vwc-base", mote, depth).random()
            base = self.p["vwc_base_min"] + u * (
                self.p["vwc_base_max"] - self.p["vwc_base_min"]
            )
            seasonal = self.p["vwc_seasonal_amp"] * math.sin(
                2 * math.pi * (self.sc.start_epoch + t) / YEAR_S
            )
            depth_scale = min(1.0, 12.0 / max(depth, 1))
            wet = self.p["rain_vwc_jump"] * depth_scale * self.rain_impulse(t)
            return max(0.02, min(0.75, base + seasonal + wet))
        if sensor_type in ("mcp9700_temp", "ps103j2_temp"):
            annual = self.p["soil_temp_annual_amp_c"] * math.sin(
                2 * math.pi * ((self.sc.start_epoch + t) / YEAR_S - 0.28)
            )
            daily = (
                self.p["soil_temp_daily_amp_c"]
                * math.exp(-depth / 15.0)
                * math.sin(2 * math.pi * (self._hour(t) - 10.0) / 24.0)
            )
            return self.p["soil_temp_mean_c"] + annual + daily
        if sensor_type == "apds9007_light":
            el = sun_elevation_sin(
                self.sc.latitude_deg, self.sc.longitude_deg,
                self._doy(t), (self._hour(t)),
            )
            level = max(0.0, min(1.0, el / 0.08))   # saturating ambient sensor
            return 3.0 + 4080.0 * level
        raise KeyError(f"environment cannot synthesize sensor type {sensor_type!r}")

    def enclosure_temp_c(self, t: float) -> float:
        hour = self._hour(t)
        base = self.p["enclosure_temp_mean_c"] + self.p[
            "enclosure_temp_daily_amp_c"
        ] * math.sin(2 * math.pi * (hour - 9.0) / 24.0)
        if 10.0 <= hour <= 16.0 and not self.raining(t):
            base += self.p["enclosure_greenhouse_boost_c"]
        return base

    def humidity_frac(self, t: float) -> float:
        pct = self.p["humidity_base_pct"] + self.p["humidity_swing_pct"] * math.sin(
            2 * math.pi * (self._hour(t) - 4.0) / 24.0
        )
        if self.raining(t):
            pct += 25.0
        return max(0.0, min(1.0, pct / 100.0))


def _channel_from_dict(d: dict, problems: list[str], where: str) -> ChannelConfig | None:
    try:
        ch = ChannelConfig(
            multiplexer_id=int(d["multiplexer_id"]),
            channel=int(d["channel"]),
            sensor_barcode=int(d["sensor_barcode"]),
            sensor_type=str(d["sensor_type"]),
            depth_cm=int(d.get("depth_cm", 10)),
        )
    except (KeyError, TypeError, ValueError) as err:
        problems.append(f"{where}: bad channel entry ({err})")
        return None
    if ch.sensor_type not in SENSOR_TYPES:
        problems.append(f"{where}: unknown sensor type {ch.sensor_type!r}")
    if not 0 <= ch.channel < 8:
        problems.append(f"{where}: channel {ch.channel} outside 0-7")
    return ch


def parse_scenario(data: dict) -> Scenario:
    problems: list[str] = []

    def need(key, cast=lambda x: x, default=None):
        if key not in data:
            if default is not None:
                return default
            problems.append(f"missing top-level field {key!r}")
            return None
        try:
            return cast(data[key])
        except (TypeError, ValueError) as err:
            problems.append(f"field {key!r}: {err}")
            return None

    name = need("name", str)
    seed = need("seed", int)
    start_epoch = need("start_epoch", float)
    duration_days = need("duration_days", float)
    lat = need("latitude_deg", float)
    lon = need("longitude_deg", float)

    bands: dict[str, BandProfile] = {}
    for tier in ("patch", "backbone"):
        spec = (data.get("bands") or {}).get(tier)
        if spec is None:
            problems.append(f"missing band profile for tier {tier!r}")
            continue
        try:
            profile = BandProfile(
                band=spec["band"],
                base_range_m=float(spec["base_range_m"]),
                humidity_attenuation_coeff=float(
                    spec.get("humidity_attenuation_coeff", 0.0)
                ),
            )
            profile.validate()
            bands[tier] = profile
        except (KeyError, ValueError) as err:
            problems.append(f"band {tier!r}: {err}")

    bs = data.get("basestation") or {}
    bs_barcode = bs.get("barcode")
    if bs_barcode is None:
        problems.append("basestation.barcode missing")
    bs_pos = tuple(bs.get("position", (0.0, 0.0)))

    failure = {**FAILURE_DEFAULTS, **(data.get("failure") or {})}
    drift_lo, drift_hi = failure["drift_ppm_range"]
    ramp_lo, ramp_hi = failure["moisture_ramp_pct_per_day"]

    motes: dict[int, MoteConfig] = {}
    seen_sensors: set[int] = set()
    unlabeled: set[int] = set()
    for m in data.get("motes", []):
        barcode = m.get("barcode")
        if barcode is None:
            problems.append("mote without barcode")
            continue
        if m.get("prelabeled") is False:
            unlabeled.add(barcode)
        if barcode in motes:
            problems.append(f"duplicate mote id {barcode}")
            continue
        if not 0 <= barcode <= 0xFFFF:
            problems.append(f"mote id {barcode} outside 16-bit range")
        channels = []
        for cd in m.get("channels", []):
            ch = _channel_from_dict(cd, problems, f"mote {barcode}")
            if ch:
                if ch.sensor_barcode in seen_sensors:
                    problems.append(
                        f"sensor {ch.sensor_barcode} assigned to two channels"
                    )
                seen_sensors.add(ch.sensor_barcode)
                channels.append(ch)
        seed_rng = make_rng(seed or 0, "mote-params", barcode)
        drift = m.get("drift_ppm")
        if drift is None:
            drift = seed_rng.uniform(drift_lo, drift_hi)
        capacity = float(m.get("battery_capacity_mah", 8000.0))
        spread = failure["battery_capacity_spread"]
        if spread:
            capacity *= 1.0 + seed_rng.uniform(-spread, spread)
        cfg = MoteConfig(
            barcode=barcode,
            role=m.get("role", "leaf"),
            patch=m.get("patch"),
            position=tuple(m.get("position", (0.0, 0.0))),
            channels=channels,
            sampling_interval_s=float(m.get("sampling_interval_s", 1200.0)),
            status_interval_s=float(m.get("status_interval_s", 3600.0)),
            battery_capacity_mah=capacity,
            drift_ppm=float(drift),
        )
        for knob in ("sleep_current_ua", "readout_charge_mc", "wakeup_charge_mc",
                     "sensor_excitation_ms", "sensor_current_ma", "adc_noise_sd"):
            if knob in m:
                setattr(cfg, knob, float(m[knob]))
        try:
            cfg.validate()
        except ValueError as err:
            problems.append(f"mote {barcode}: {err}")
        motes[barcode] = cfg

    patches: dict[int, Patch] = {}
    leaves_seen: set[int] = set()
    for p in data.get("patches", []):
        pid = p.get("id")
        if pid is None:
            problems.append("patch without id")
            continue
        if pid in patches:
            problems.append(f"duplicate patch id {pid}")
            continue
        router = p.get("router")
        leaves = list(p.get("leaves", []))
        if router not in motes:
            problems.append(f"patch {pid}: router {router} is not a defined mote")
        for leaf in leaves:
            if leaf not in motes:
                problems.append(f"patch {pid}: leaf {leaf} is not a defined mote")
            if leaf in leaves_seen:
                problems.append(f"leaf {leaf} appears in two patches")
            leaves_seen.add(leaf)
        patches[pid] = Patch(id=pid, router=router, leaves=leaves)

    for barcode, cfg in motes.items():
        if cfg.patch is not None and cfg.patch not in patches:
            problems.append(f"mote {barcode} references undefined patch {cfg.patch}")

    if problems:
        raise ScenarioError(problems)

    return Scenario(
        name=name,
        seed=seed,
        start_epoch=start_epoch,
        duration_days=duration_days,
        latitude_deg=lat,
        longitude_deg=lon,
        bands=bands,
        basestation=bs_barcode,
        basestation_position=bs_pos,
        patches=patches,
        motes=motes,
        environment=dict(data.get("environment") or {}),
        failure=failure,
        protocol=dict(data.get("protocol") or {}),
        auto_download_days=data.get("auto_download_days"),
        unlabeled_motes=unlabeled,
        raw=data,
    )


def load_scenario_file(path: str | Path) -> Scenario:
    with open(path) as fh:
        data = json.load(fh)
    return parse_scenario(data)


CUBHILL_LAT = 39.412507
CUBHILL_LON = -76.520903


def cubhill_channels(mote: int, depths=(10, 20), with_light: bool = False) -> list[dict]:
    """One sampling location: moisture and temperature at each depth."""
    mux = 20000 + mote
    channels = []
    ch = 0
    for depth in depths:
        channels.append({
            "multiplexer_id": mux, "channel": ch,
            "sensor_barcode": 50000 + mote * 10 + ch,
            "sensor_type": "ec5_vwc", "depth_cm": depth,
        })
        ch += 1
        channels.append({
            "multiplexer_id": mux, "channel": ch,
            "sensor_barcode": 50000 + mote * 10 + ch,
            "sensor_type": "ps103j2_temp", "depth_cm": depth,
        })
        ch += 1
    if with_light:
        channels.append({
            "multiplexer_id": mux, "channel": ch,
            "sensor_barcode": 50000 + mote * 10 + ch,
            "sensor_type": "apds9007_light", "depth_cm": 0,
        })
    return channels


def make_deployment(
    name: str,
    seed: int,
    n_patches: int,
    leaves_per_patch: int,
    start_epoch: float = 1277337600.0,     # 2010-06-24T00:00Z
    duration_days: float = 30.0,
    sampling_interval_s: float = 600.0,
    status_interval_s: float = 3600.0,
    latitude_deg: float = CUBHILL_LAT,
    longitude_deg: float = CUBHILL_LON,
    depths=(10, 20),
    with_light: bool = False,
    battery_capacity_mah: float = 8000.0,
    patch_radius_m: float = 60.0,
    patch_ring_m: float = 260.0,
    failure: dict | None = None,
    environment: dict | None = None,
    protocol: dict | None = None,
    auto_download_days: float | None = None,
    router_senses: bool = True,
) -> dict:
    """Generate a scenario document: patches of leaves ringed around a
    central basestation, one long-range router per patch."""
    rng = make_rng(seed, "layout", name)
    motes = []
    patches = []
    for p in range(1, n_patches + 1):
        angle = 2 * math.pi * (p - 1) / max(1, n_patches)
        cx = patch_ring_m * math.cos(angle)
        cy = patch_ring_m * math.sin(angle)
        router = 1000 + p
        motes.append({
            "barcode": router, "role": "router", "patch": p,
            "position": [round(cx, 1), round(cy, 1)],
            "sampling_interval_s": sampling_interval_s,
            "status_interval_s": status_interval_s,
            "battery_capacity_mah": battery_capacity_mah * 2,  # bigger pack on routers
            "channels": cubhill_channels(router, depths, with_light) if router_senses else [],
        })
        leaves = []
        for k in range(leaves_per_patch):
            barcode = p * 100 + k + 1
            r = patch_radius_m * (0.35 + 0.65 * rng.random())
            theta = rng.uniform(0, 2 * math.pi)
            leaves.append(barcode)
            motes.append({
                "barcode": barcode, "role": "leaf", "patch": p,
                "position": [round(cx + r * math.cos(theta), 1),
                             round(cy + r * math.sin(theta), 1)],
                "sampling_interval_s": sampling_interval_s,
                "status_interval_s": status_interval_s,
                "battery_capacity_mah": battery_capacity_mah,
                "channels": cubhill_channels(barcode, depths, with_light),
            })
        patches.append({"id": p, "router": router, "leaves": leaves})
    return {
        "name": name,
        "seed": seed,
        "start_epoch": start_epoch,
        "duration_days": duration_days,
        "latitude_deg": latitude_deg,
        "longitude_deg": longitude_deg,
        "bands": {
            "patch": {"band": "900MHz", "base_range_m": 140.0},
            "backbone": {"band": "900MHz", "base_range_m": 420.0},
        },
        "basestation": {"barcode": 900, "position": [0.0, 0.0]},
        "patches": patches,
        "motes": motes,
        "environment": environment or {},
        "failure": failure or {},
        "protocol": protocol or {},
        "auto_download_days": auto_download_days,
    }
