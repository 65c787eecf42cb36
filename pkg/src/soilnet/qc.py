"""Quality control: screening, sensor post-mortem categories, yield analytics.

The sensor categorization reproduces the lab post-mortem protocol: batches
of sensors read a homogenized test soil for two minutes; a sensor is good
when its mean tracks the grand mean within tolerance and its readings are
tight (low CV), fair when accurate but noisy, bad otherwise. The grand
mean drops obviously broken values by robust (median/MAD) trimming before
averaging.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

from .sensors import SENSOR_TYPES

DAY_S = 86400.0


@dataclass(frozen=True)
class QcRuleSet:
    hard_ranges: dict = None
    plausible_ranges: dict = None
    spike_threshold: float = 0.15          # VWC jump between consecutive samples
    spike_max_gap_s: float = 1200.0        # only consecutive samples count
    min_batch: int = 60
    mean_tolerance: float = 0.03
    cv_max: float = 0.03

    def __post_init__(self):
        if self.hard_ranges is None:
            object.__setattr__(self, "hard_ranges", {
                name: st.hard_range for name, st in SENSOR_TYPES.items()
                if st.hard_range
            })
        if self.plausible_ranges is None:
            object.__setattr__(self, "plausible_ranges", {
                name: st.plausible_range for name, st in SENSOR_TYPES.items()
                if st.plausible_range
            })
        for name, hard in self.hard_ranges.items():
            plaus = self.plausible_ranges.get(name)
            if plaus and not (hard[0] <= plaus[0] and plaus[1] <= hard[1]):
                raise ValueError(f"hard range must contain plausible range for {name}")


@dataclass
class ScreenResult:
    flags: dict = field(default_factory=dict)        # (mote, cookie) -> [flag, ...]
    missing: list = field(default_factory=list)      # (mote, mux, channel, utc)

    def count(self, flag: str) -> int:
        return sum(flag in f for f in self.flags.values())


def screen(rows: list[dict], rules: QcRuleSet, rain_periods=()) -> ScreenResult:
    """Flag each sample row: duplicate, out-of-hard-range, implausible, spike.

    Rows need mote, cookie, multiplexer, channel, value, sensor_type, and a
    timestamp (utc if reconstructed, else local_time). Missing samples are
    inferred from schedule gaps per channel when rows carry
    sampling_interval_s. Deterministic and order-independent.
    """
    result = ScreenResult()
    ordered = sorted(rows, key=lambda r: (r["mote"], r["multiplexer"], r["channel"],
                                          r["cookie"]))
    seen = set()
    by_channel: dict = {}
    for row in ordered:
        key = (row["mote"], row["cookie"])
        flags = result.flags.setdefault(key, [])
        if key in seen:
            flags.append("duplicate")
        seen.add(key)
        stype = row.get("sensor_type")
        value = row.get("value")
        if value is not None and stype:
            hard = rules.hard_ranges.get(stype)
            plaus = rules.plausible_ranges.get(stype)
            if hard and not (hard[0] <= value <= hard[1]):
                flags.append("out-of-hard-range")
            elif plaus and not (plaus[0] <= value <= plaus[1]):
                flags.append("implausible")
        by_channel.setdefault(
            (row["mote"], row["multiplexer"], row["channel"]), []
        ).append(row)

    def in_rain(t):
        return any(a <= t <= b for a, b in rain_periods)

    for (mote, mux, ch), chan_rows in by_channel.items():
        interval = chan_rows[0].get("sampling_interval_s")
        prev = None
        for row in chan_rows:
            t = row.get("utc") if row.get("utc") is not None else row.get("local_time")
            v = row.get("value")
            if prev is not None and t is not None:
                pt, pv = prev
                if interval and t - pt > 1.5 * interval:
                    gaps = round((t - pt) / interval) - 1
                    for k in range(1, gaps + 1):
                        result.missing.append((mote, mux, ch, pt + k * interval))
                if (
                    pv is not None and v is not None
                    and row.get("sensor_type") == "ec5_vwc"
                    and t - pt <= rules.spike_max_gap_s
                    and abs(v - pv) > rules.spike_threshold
                    and not in_rain(t)
                ):
                    result.flags[(mote, row["cookie"])].append("spike")
            prev = (t, v)
    for key, flags in result.flags.items():
        if not flags:
            flags.append("ok")
    return result


@dataclass
class SensorVerdict:
    sensor_barcode: int
    mean_vwc: float | None
    cv: float | None
    category: str                  # good | fair | bad | withheld
    damage: str = "none"           # none | minor | major


def categorize_sensor(
    readings: list[float],
    grand_mean: float,
    sensor_barcode: int = 0,
    damage: str = "none",
    rules: QcRuleSet | None = None,
) -> SensorVerdict:
    """good: mean within tolerance of the grand mean and CV under the cap;
    fair: accurate mean but noisy; bad: mean out of the allowed band."""
    rules = rules or QcRuleSet()
    if len(readings) < rules.min_batch:
        return SensorVerdict(sensor_barcode, None, None, "withheld", damage)
    mean = statistics.fmean(readings)
    sd = statistics.stdev(readings)
    cv = sd / abs(mean) if mean else math.inf
    if abs(mean - grand_mean) <= rules.mean_tolerance:
        category = "good" if cv <= rules.cv_max else "fair"
    else:
        category = "bad"
    return SensorVerdict(sensor_barcode, mean, cv, category, damage)


def grand_mean_of_means(per_sensor_means: list[float], trim_sigmas: float = 3.0):
    """Mean of per-sensor means after iterative robust trimming.

    Values beyond trim_sigmas robust standard deviations (median/MAD) are
    the reproducible stand-in for manually excluding obviously bad values.
    """
    kept = list(per_sensor_means)
    while len(kept) > 2:
        med = statistics.median(kept)
        mad = statistics.median(abs(x - med) for x in kept)
        sd = 1.4826 * mad
        if sd == 0:
            break
        survivors = [x for x in kept if abs(x - med) <= trim_sigmas * sd]
        if len(survivors) == len(kept):
            break
        kept = survivors
    return statistics.fmean(kept), kept


@dataclass
class YieldSeries:
    days: list[int]
    total_yield: list[float]
    surviving_yield: list[float]
    maintenance_interval_days: dict[int, int]

    def maintenance_fraction_exceeding(self, days: int) -> float:
        if not self.maintenance_interval_days:
            return 0.0
        n = sum(1 for v in self.maintenance_interval_days.values() if v > days)
        return n / len(self.maintenance_interval_days)


def yield_series(
    schedule_per_day: dict[int, float],
    received: dict[tuple[int, int], int],
    death_day: dict[int, int | None],
    n_days: int,
    maintenance_threshold: float = 0.9,
) -> YieldSeries:
    """Daily yield fractions, network-wide and surviving-node variants.

    total counts every mote's full schedule in the denominator whether it
    is alive or not; surviving restricts both sides to motes alive that
    day. The maintenance interval of a mote is the last day it delivered
    at least 90% of its expected volume.
    """
    motes = sorted(schedule_per_day)
    days = list(range(n_days))
    total, surviving = [], []
    for day in days:
        exp_total = sum(schedule_per_day[m] for m in motes)
        got_total = sum(received.get((m, day), 0) for m in motes)
        alive = [
            m for m in motes
            if death_day.get(m) is None or death_day[m] > day
        ]
        exp_alive = sum(schedule_per_day[m] for m in alive)
        got_alive = sum(received.get((m, day), 0) for m in alive)
        total.append(got_total / exp_total if exp_total else 1.0)
        surviving.append(got_alive / exp_alive if exp_alive else 1.0)
    maintenance = {}
    for m in motes:
        last = -1
        for day in days:
            exp = schedule_per_day[m]
            if exp and received.get((m, day), 0) >= maintenance_threshold * exp:
                last = day
        maintenance[m] = last + 1
    return YieldSeries(days, total, surviving, maintenance)


def failure_breakdown(failure_states: dict[int, object]) -> dict[str, float]:
    """Cause fractions over dead motes, by the recorded cause.

    The unknown bucket holds deaths whose record shows neither low battery
    nor high moisture beforehand (the simulator's unknown hazard).
    """
    causes: dict[str, int] = {}
    for state in failure_states.values():
        cause = getattr(state, "cause", None)
        if cause:
            causes[cause] = causes.get(cause, 0) + 1
    dead = sum(causes.values())
    if dead == 0:
        return {}
    return {c: n / dead for c, n in sorted(causes.items())}


def screen_summary_csv(result: ScreenResult) -> str:
    """Flat CSV of every flagged row and schedule gap (for export)."""
    lines = ["kind,mote,multiplexer,channel,cookie,detail"]
    for (mote, cookie), flags in sorted(result.flags.items()):
        bad = [f for f in flags if f != "ok"]
        if bad:
            lines.append(f"flag,{mote},,,{cookie},{';'.join(bad)}")
    for mote, mux, ch, t in sorted(result.missing):
        lines.append(f"missing,{mote},{mux},{ch},,expected at {t:.0f}")
    return "\n".join(lines) + "\n"


@dataclass
class Alert:
    severity: str          # error | warning
    mote: int | None
    message: str

    def to_dict(self):
        return {"severity": self.severity, "mote": self.mote, "message": self.message}


def build_alerts(
    failure_states: dict,
    latest_battery_mv: dict[int, int],
    screen_result: ScreenResult | None = None,
    low_battery_mv: float = 3200.0,
    max_flags: int = 5,
) -> list[Alert]:
    """Operator-facing alert list: unrecoverable problems first."""
    alerts: list[Alert] = []
    for mote, state in sorted(failure_states.items()):
        cause = getattr(state, "cause", None)
        if cause:
            alerts.append(Alert("error", mote, f"mote {mote} dead ({cause})"))
    for mote, mv in sorted(latest_battery_mv.items()):
        if mote in failure_states and getattr(failure_states[mote], "cause", None):
            continue
        if mv < low_battery_mv:
            alerts.append(Alert("warning", mote, f"mote {mote} battery low: {mv} mV"))
    if screen_result:
        shown = 0
        for (mote, cookie), flags in sorted(screen_result.flags.items()):
            bad = [f for f in flags if f not in ("ok",)]
            if bad and shown < max_flags:
                alerts.append(Alert(
                    "warning", mote, f"mote {mote} cookie {cookie}: {','.join(bad)}"
                ))
                shown += 1
        if screen_result.missing:
            alerts.append(Alert(
                "warning", None, f"{len(screen_result.missing)} samples missing vs schedule"
            ))
    order = {"error": 0, "warning": 1}
    alerts.sort(key=lambda a: (order[a.severity], a.mote if a.mote is not None else -1))
    return alerts
