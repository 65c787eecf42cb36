"""Mote firmware simulation: sampling, logging, power, and failure processes.

A mote wakes on its sampling schedule, excites each assigned sensor through
the multiplexer, logs one sample record per channel, and piggybacks a status
record once per status interval. Battery accounting is charge-exact: every
modeled draw debits the same ledger the voltage model reads.

The duty charges default to a calibration where a 9-sensor mote on a
20-minute schedule averages ~100 uA and a 2-sensor mote ~25 uA with the
same parameterization; per-sensor cost dominates, as the published
operating points imply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .records import (
    MoteLog,
    SampleRecord,
    StatusRecord,
    TICKS_PER_SECOND,
    TimeReferenceRecord,
)
from .sensors import transfer_to_adc
from .util import make_rng

DAY_S = 86400.0

# duty-charge defaults, calibrated jointly against the two published
# operating points (see average_current_ua)
DEFAULT_SLEEP_UA = 1.5
DEFAULT_READOUT_CHARGE_MC = 12.7571
DEFAULT_WAKE_CHARGE_MC = 2.4857

DEATH_CAUSES = ("battery", "moisture", "software", "unknown")


@dataclass(frozen=True)
class ChannelConfig:
    multiplexer_id: int
    channel: int
    sensor_barcode: int
    sensor_type: str
    depth_cm: int = 10

    def validate(self) -> None:
        if not 0 <= self.channel < 8:
            raise ValueError(f"channel {self.channel} outside 0-7")


@dataclass
class MoteConfig:
    barcode: int
    role: str = "leaf"                  # leaf | router | basestation
    patch: int | None = None
    position: tuple[float, float] = (0.0, 0.0)
    channels: list[ChannelConfig] = field(default_factory=list)
    sampling_interval_s: float = 1200.0
    status_interval_s: float = 3600.0
    sensor_excitation_ms: float = 10.0
    sensor_current_ma: float = 10.0
    sleep_current_ua: float = DEFAULT_SLEEP_UA
    readout_charge_mc: float = DEFAULT_READOUT_CHARGE_MC
    wakeup_charge_mc: float = DEFAULT_WAKE_CHARGE_MC
    battery_capacity_mah: float = 8000.0
    operating_voltage_mv: float = 3000.0
    regulator_dropout_mv: float = 25.0
    battery_fluctuation_mv: float = 100.0
    drift_ppm: float = 0.0
    adc_noise_sd: float = 2.0
    log_capacity: int | None = None

    def validate(self) -> None:
        if self.sensor_excitation_ms <= 0:
            raise ValueError("sensor excitation must be positive")
        if self.sampling_interval_s <= 0:
            raise ValueError("sampling interval must be positive")
        seen = set()
        for ch in self.channels:
            ch.validate()
            key = (ch.multiplexer_id, ch.channel)
            if key in seen:
                raise ValueError(f"channel {key} assigned twice on mote {self.barcode}")
            seen.add(key)
        if self.operating_voltage_mv + self.regulator_dropout_mv >= 3600:
            raise ValueError("cutoff voltage must sit below the battery plateau")

    @property
    def cutoff_mv(self) -> float:
        return self.operating_voltage_mv + self.regulator_dropout_mv

    def excitation_charge_mc(self) -> float:
        return self.sensor_excitation_ms * self.sensor_current_ma / 1000.0


def average_current_ua(config: MoteConfig) -> float:
    """Closed-form long-run average draw for a constant schedule."""
    n = len(config.channels)
    if n == 0:
        return config.sleep_current_ua
    per_event_mc = config.wakeup_charge_mc + n * (
        config.excitation_charge_mc() + config.readout_charge_mc
    )
    return config.sleep_current_ua + 1000.0 * per_event_mc / config.sampling_interval_s


@dataclass
class BatteryState:
    capacity_mah: float
    charge_mah: float
    fluctuation_mv: float = 100.0
    phase_rad: float = 0.0
    plateau_mv: float = 3600.0
    knee_fraction: float = 0.10
    empty_mv: float = 2000.0
    total_drained_mc: float = 0.0

    def base_voltage_mv(self) -> float:
        frac = max(0.0, self.charge_mah / self.capacity_mah)
        if frac >= self.knee_fraction:
            return self.plateau_mv
        return self.empty_mv + (self.plateau_mv - self.empty_mv) * (
            frac / self.knee_fraction
        )

    def voltage_mv(self, t_s: float) -> float:
        hour = (t_s / 3600.0) % 24.0
        wobble = self.fluctuation_mv * math.sin(2 * math.pi * hour / 24.0 + self.phase_rad)
        return self.base_voltage_mv() + wobble

    def drain_mc(self, mc: float) -> None:
        self.charge_mah -= mc / 3600.0
        self.total_drained_mc += mc


def battery_voltage(state: BatteryState, t_s: float) -> float:
    return state.voltage_mv(t_s)


@dataclass
class FailureState:
    status: str = "alive"               # alive | dead_battery | dead_moisture | ...
    moisture_pct: float = 0.0
    moisture_ramp_pct_per_day: float = 0.0
    rain_jump_pct: float = 0.0
    hazards_per_day: dict[str, float] = field(default_factory=dict)
    died_at: float | None = None

    @property
    def alive(self) -> bool:
        return self.status == "alive"

    @property
    def cause(self) -> str | None:
        return self.status[5:] if self.status.startswith("dead_") else None

    def kill(self, cause: str, t_s: float) -> None:
        if not self.alive:
            return  # dead states are absorbing; cause recorded once
        self.status = f"dead_{cause}"
        self.died_at = t_s


class MoteState:
    """One mote: log, battery, failure state, and its local clock."""

    def __init__(self, config: MoteConfig, seed: int = 0, boot_time_s: float = 0.0):
        config.validate()
        self.config = config
        self.boot_time_s = boot_time_s
        self.log = MoteLog(capacity=config.log_capacity or 8 * 1024 * 1024)
        self.battery = BatteryState(
            capacity_mah=config.battery_capacity_mah,
            charge_mah=config.battery_capacity_mah,
            fluctuation_mv=config.battery_fluctuation_mv,
            phase_rad=make_rng(seed, "phase", config.barcode).uniform(0, 2 * math.pi),
        )
        self.failure = FailureState()
        self.rng = make_rng(seed, "mote", config.barcode)
        self.sample_seq = 0
        self.last_debit_t = boot_time_s
        self.last_status_t: float | None = None
        self.last_hazard_t = boot_time_s
        self.settings = None            # SettingsVolume mirror, set by labeler
        self.watermarks: dict[int, list[int]] = {}   # router: leaf -> [watermark, known_end]
        self.low_voltage_override = False            # pathology injection for tests

    # --- clock ---------------------------------------------------------

    def local_seconds(self, t_s: float) -> int:
        return int((t_s - self.boot_time_s) * (1 + self.config.drift_ppm * 1e-6))

    def local_seconds_f(self, t_s: float) -> float:
        return (t_s - self.boot_time_s) * (1 + self.config.drift_ppm * 1e-6)

    def local_sub_ticks(self, t_s: float) -> int:
        frac = self.local_seconds_f(t_s) % 1.0
        return min(TICKS_PER_SECOND - 1, int(frac * TICKS_PER_SECOND))

    # --- power ---------------------------------------------------------

    @property
    def alive(self) -> bool:
        return self.failure.alive

    def voltage_mv(self, t_s: float) -> float:
        return self.battery.voltage_mv(t_s)

    def transmit_reliable(self, t_s: float, threshold_mv: float = 3100.0) -> bool:
        """False when voltage is too low to push data packets out.

        Such motes still answer probes and receive, reproducing the
        source-routing pathology.
        """
        if self.low_voltage_override:
            return False
        return self.voltage_mv(t_s) >= threshold_mv

    def drain(self, mc: float, t_s: float) -> list[tuple]:
        self.battery.drain_mc(mc)
        return self._check_battery_death(t_s)

    def _debit_sleep(self, t_s: float) -> None:
        dt = max(0.0, t_s - self.last_debit_t)
        self.battery.drain_mc(self.config.sleep_current_ua * dt / 1000.0)
        self.last_debit_t = t_s

    def _check_battery_death(self, t_s: float) -> list[tuple]:
        if self.alive and self.voltage_mv(t_s) < self.config.cutoff_mv:
            self.failure.kill("battery", t_s)
            return [("death", self.config.barcode, "battery", t_s)]
        return []


def sample_channel(
    sensor_type_name: str, true_value: float, noise_sd: float, rng
) -> int:
    """Excite one channel: clamp(round(transfer(value) + gaussian), 0, 4095)."""
    noise = rng.gauss(0.0, noise_sd) if noise_sd > 0 else 0.0
    return transfer_to_adc(true_value, sensor_type_name, noise)


def advance_failures(mote: MoteState, t_s: float, env=None) -> list[tuple]:
    """Advance stochastic hazards over the interval since the last check.

    Moisture in the enclosure ramps (plus rain-event jumps) and scales the
    moisture hazard; software and unknown hazards are constant rates.
    Battery death is deterministic from the charge model, handled in the
    wake path.
    """
    if not mote.alive:
        return []
    f = mote.failure
    dt_days = max(0.0, t_s - mote.last_hazard_t) / DAY_S
    if dt_days == 0.0:
        return []
    rain_events = env.rain_event_count(mote.last_hazard_t, t_s) if env else 0
    mote.last_hazard_t = t_s
    f.moisture_pct = min(
        100.0,
        f.moisture_pct + f.moisture_ramp_pct_per_day * dt_days
        + f.rain_jump_pct * rain_events,
    )
    rates = {
        "moisture": f.hazards_per_day.get("moisture", 0.0) * (f.moisture_pct / 100.0),
        "software": f.hazards_per_day.get("software", 0.0),
        "unknown": f.hazards_per_day.get("unknown", 0.0),
    }
    total = sum(rates.values())
    if total <= 0:
        return []
    p_any = 1.0 - math.exp(-total * dt_days)
    if mote.rng.random() >= p_any:
        return []
    pick = mote.rng.random() * total
    acc = 0.0
    for cause, rate in rates.items():
        acc += rate
        if pick <= acc:
            f.kill(cause, t_s)
            return [("death", mote.config.barcode, cause, t_s)]
    f.kill("unknown", t_s)
    return [("death", mote.config.barcode, "unknown", t_s)]


def step_mote(mote: MoteState, env, now: float) -> list[tuple]:
    """One sampling wake: sample every assigned channel, log, debit battery.

    Emits a status record when the status interval has elapsed. Dead motes
    emit nothing. Returns simulator events:
    ("sample"|"status", barcode, record) and ("death", barcode, cause, t).
    """
    if not mote.alive:
        return []
    events: list[tuple] = []
    cfg = mote.config
    mote._debit_sleep(now)
    events += advance_failures(mote, now, env)
    if not mote.alive:
        return events
    events += mote._check_battery_death(now)
    if not mote.alive:
        return events

    local = mote.local_seconds(now)
    if cfg.channels:
        for ch in cfg.channels:
            true_value = env.true_value(ch.sensor_type, (cfg.barcode, ch.depth_cm), now)
            raw = sample_channel(ch.sensor_type, true_value, cfg.adc_noise_sd, mote.rng)
            rec = SampleRecord(
                origin_mote=cfg.barcode,
                multiplexer_id=ch.multiplexer_id,
                channel=ch.channel,
                raw_adc=raw,
                local_time=local,
                sequence=mote.sample_seq,
            )
            mote.log.append(rec)
            events.append(("sample", cfg.barcode, rec))
            mote.sample_seq += 1
        wake_mc = cfg.wakeup_charge_mc + len(cfg.channels) * (
            cfg.excitation_charge_mc() + cfg.readout_charge_mc
        )
        mote.battery.drain_mc(wake_mc)

    if mote.last_status_t is None or now - mote.last_status_t >= cfg.status_interval_s:
        mote.last_status_t = now
        status = StatusRecord(
            origin_mote=cfg.barcode,
            battery_millivolts=max(0, min(4200, round(mote.voltage_mv(now)))),
            enclosure_humidity_pct=min(100, round(mote.failure.moisture_pct)),
            internal_temp_centi_c=round(env.enclosure_temp_c(now) * 100),
            local_time=local,
        )
        mote.log.append(status)
        events.append(("status", cfg.barcode, status))

    events += mote._check_battery_death(now)
    return events


def record_time_reference(
    mote: MoteState,
    now: float,
    global_time: int | None = None,
    neighbor: MoteState | None = None,
) -> TimeReferenceRecord:
    """Log a time reference pairing this mote's clock with a global clock
    or a neighbor's simultaneous reading (download-time anchoring)."""
    rec = TimeReferenceRecord(
        origin_mote=mote.config.barcode,
        local_time=mote.local_seconds(now),
        local_sub_ticks=mote.local_sub_ticks(now),
        global_time=global_time,
        neighbor_id=neighbor.config.barcode if neighbor else None,
        neighbor_local_time=neighbor.local_seconds(now) if neighbor else None,
        neighbor_sub_ticks=neighbor.local_sub_ticks(now) if neighbor else 0,
    )
    mote.log.append(rec)
    return rec
