"""Timestamp reconstruction: anchor-based clock fits and the light fallback.

Motes have no reliable clock. Records carry local seconds since boot; this
module maps them to UTC either by least-squares fitting (local, global)
anchor pairs gathered at download time (with transitive anchoring through
neighbor cross-references), or, for segments with too few anchors, by
recovering the date from the trend of day lengths in the mote's light
trace and aligning local noon with the dawn-dusk midpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .solar import SolarModel, PolarLightError, day_length_hours

NOMINAL_RATE_BAND_PPM = 200.0
REBOOT_DROP_S = 60.0          # local time falling back this far marks a reboot
DAY_S = 86400.0


@dataclass
class ClockSegment:
    """One reboot epoch of one mote with its fitted local->UTC mapping."""

    mote: int
    epoch: int
    local_lo: float
    local_hi: float
    slope: float | None = None
    offset: float | None = None
    anchors_used: int = 0
    residual_rms: float = 0.0
    method: str | None = None      # "anchor" | "light" | None (unanchored)

    @property
    def anchored(self) -> bool:
        return self.method is not None

    @property
    def rate_ok(self) -> bool:
        if self.slope is None:
            return False
        return abs(self.slope - 1.0) <= NOMINAL_RATE_BAND_PPM * 1e-6

    def to_utc(self, local_s: float) -> float:
        if self.slope is None:
            raise ValueError("segment is unanchored")
        return self.slope * local_s + self.offset

    def covers(self, local_s: float) -> bool:
        return self.local_lo <= local_s <= self.local_hi


def fit_line(anchors: list[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares global = a*local + b; returns (a, b, residual rms)."""
    if len(anchors) < 2:
        raise ValueError("need at least two anchors")
    local = np.array([a for a, _ in anchors], dtype=float)
    glob = np.array([g for _, g in anchors], dtype=float)
    # center for conditioning; local spans can reach 1e7 s
    l0 = local.mean()
    a, b0 = np.polyfit(local - l0, glob, 1)
    b = b0 - a * l0
    resid = glob - (a * local + b)
    rms = float(np.sqrt(np.mean(resid**2))) if len(anchors) > 2 else 0.0
    return float(a), float(b), rms


def split_reboot_segments(local_times: list[float]) -> list[tuple[int, int]]:
    """Index ranges [i, j) of reboot epochs in an arrival-ordered stream."""
    if not local_times:
        return []
    segs = []
    start = 0
    for i in range(1, len(local_times)):
        if local_times[i] < local_times[i - 1] - REBOOT_DROP_S:
            segs.append((start, i))
            start = i
    segs.append((start, len(local_times)))
    return segs


def fit_clock(
    anchors: list[tuple[float, float]],
    mote: int = 0,
    stream_local_times: list[float] | None = None,
) -> list[ClockSegment]:
    """Fit per-reboot-segment clock lines for one mote.

    `anchors` are (local_s, global_s) pairs in arrival order. The optional
    record stream extends segment boundaries beyond the anchored range.
    Segments with fewer than two anchors come back unanchored, as
    candidates for the light fallback.
    """
    points = list(anchors)
    segments: list[ClockSegment] = []
    locals_only = [a for a, _ in points]
    for epoch, (i, j) in enumerate(split_reboot_segments(locals_only)):
        seg_anchors = points[i:j]
        lo = min(a for a, _ in seg_anchors)
        hi = max(a for a, _ in seg_anchors)
        seg = ClockSegment(mote=mote, epoch=epoch, local_lo=lo, local_hi=hi)
        if len(seg_anchors) >= 2:
            a, b, rms = fit_line(seg_anchors)
            if a > 0:
                seg.slope, seg.offset = a, b
                seg.anchors_used = len(seg_anchors)
                seg.residual_rms = rms
                seg.method = "anchor"
        segments.append(seg)
    if stream_local_times:
        _extend_segments(segments, stream_local_times)
    return segments


def _extend_segments(segments: list[ClockSegment], stream: list[float]) -> None:
    for i, j in split_reboot_segments(stream):
        lo, hi = min(stream[i:j]), max(stream[i:j])
        for seg in segments:
            if lo <= seg.local_hi and hi >= seg.local_lo:
                seg.local_lo = min(seg.local_lo, lo)
                seg.local_hi = max(seg.local_hi, hi)
                break


@dataclass
class CrossReference:
    """Two motes read their clocks at the same instant."""

    mote: int
    local_s: float
    neighbor: int
    neighbor_local_s: float


def reconstruct_clocks(
    anchors_by_mote: dict[int, list[tuple[float, float]]],
    crossrefs: list[CrossReference] = (),
    streams_by_mote: dict[int, list[float]] | None = None,
) -> dict[int, list[ClockSegment]]:
    """Deployment-wide clock fit with transitive neighbor anchoring.

    Motes short on direct anchors gain derived anchors through neighbors
    whose segments already fitted; iterates to a fixpoint.
    """
    streams_by_mote = streams_by_mote or {}
    anchors = {m: list(a) for m, a in anchors_by_mote.items()}
    for ref in crossrefs:
        anchors.setdefault(ref.mote, [])
        anchors.setdefault(ref.neighbor, [])
    used: set[int] = set()
    result: dict[int, list[ClockSegment]] = {}
    for _ in range(len(anchors) + 1):
        result = {
            m: fit_clock(pts, mote=m, stream_local_times=streams_by_mote.get(m))
            for m, pts in anchors.items()
        }
        progressed = False
        for idx, ref in enumerate(crossrefs):
            if idx in used:
                continue
            for seg in result.get(ref.neighbor, []):
                if seg.anchored and seg.covers(ref.neighbor_local_s):
                    derived = seg.to_utc(ref.neighbor_local_s)
                    anchors[ref.mote].append((ref.local_s, derived))
                    anchors[ref.mote].sort(key=lambda p: p[0])
                    used.add(idx)
                    progressed = True
                    break
        if not progressed:
            break
    return result


def segment_for(segments: list[ClockSegment], local_s: float) -> ClockSegment | None:
    best = None
    for seg in segments:
        if seg.covers(local_s):
            return seg
        if best is None or abs(local_s - seg.local_lo) < abs(local_s - best.local_lo):
            best = seg
    return best


# --- light-trace fallback ---------------------------------------------------


@dataclass
class DaylightDay:
    dawn_local_s: float
    dusk_local_s: float
    complete: bool = True

    @property
    def noon_local_s(self) -> float:
        return 0.5 * (self.dawn_local_s + self.dusk_local_s)

    @property
    def length_hours(self) -> float:
        return (self.dusk_local_s - self.dawn_local_s) / 3600.0


@dataclass
class DaylightResult:
    days: list[DaylightDay] = field(default_factory=list)
    skipped: list[tuple[float, float, str]] = field(default_factory=list)
    cadence_s: float = 0.0


def _hysteresis_edges(times, above, hysteresis):
    """(rising, falling) edge times; a flip needs `hysteresis` consecutive samples."""
    rising, falling = [], []
    state = above[0]
    run = 0
    run_start = 0
    for i in range(1, len(above)):
        if above[i] != state:
            if run == 0:
                run_start = i
            run += 1
            if run >= hysteresis:
                state = above[i]
                (rising if state else falling).append(times[run_start])
                run = 0
        else:
            run = 0
    return rising, falling


def detect_daylight(
    times_local_s,
    values,
    threshold_frac: float = 0.10,
    hysteresis: int = 3,
    max_gap_factor: float = 3.0,
    dark_floor: float = 50.0,
) -> DaylightResult:
    """Dawn/dusk/noon per day from a light trace sampled every 5-10 minutes.

    The threshold sits at a fraction of the day's maximum, so traces from
    sensors that saturate to a square wave and smoothly varying ones both
    resolve. Days with interior sampling gaps are flagged incomplete;
    spans with no crossing structure are reported skipped. Traces never
    rising above `dark_floor` counts are dark regardless of contrast.
    """
    times = np.asarray(times_local_s, dtype=float)
    vals = np.asarray(values, dtype=float)
    result = DaylightResult()
    if len(times) < 2 * hysteresis:
        return result
    cadence = float(np.median(np.diff(times)))
    result.cadence_s = cadence
    peak = float(vals.max())
    if peak <= dark_floor:
        result.skipped.append((float(times[0]), float(times[-1]), "dark"))
        return result
    thr = threshold_frac * peak
    rising, falling = _hysteresis_edges(times, vals >= thr, hysteresis)
    if not rising or not falling:
        cause = "saturated" if vals.min() >= thr else "dark"
        result.skipped.append((float(times[0]), float(times[-1]), cause))
        return result

    fi = 0
    for dawn in rising:
        while fi < len(falling) and falling[fi] <= dawn:
            fi += 1
        if fi >= len(falling):
            break
        dusk = falling[fi]
        span_h = (dusk - dawn) / 3600.0
        if not 2.0 <= span_h <= 22.0:
            result.skipped.append((dawn, dusk, "implausible span"))
            continue
        # refine against the local day's own maximum
        window = (times >= dawn - 2 * 3600) & (times <= dusk + 2 * 3600)
        day_peak = float(vals[window].max())
        if day_peak < thr:
            result.skipped.append((dawn, dusk, "dark"))
            continue
        inside = (times >= dawn - 2 * 3600) & (times <= dusk + 2 * 3600)
        seg_t, seg_v = times[inside], vals[inside]
        r2, f2 = _hysteresis_edges(seg_t, seg_v >= threshold_frac * day_peak, hysteresis)
        d = r2[0] if r2 else dawn
        e = f2[-1] if f2 else dusk
        gaps = np.diff(seg_t)
        complete = bool(len(gaps) == 0 or gaps.max() <= max_gap_factor * cadence)
        result.days.append(DaylightDay(float(d), float(e), complete))
    return result


@dataclass
class DateEstimate:
    day_of_year: int
    interval_lo: int       # plausible-range halfwidths in days (non-negative)
    interval_hi: int
    trend: int             # +1 lengthening days, -1 shortening
    cost_hours: float

    @property
    def halfwidth(self) -> int:
        return max(self.interval_lo, self.interval_hi)


def _model_lengths(latitude_deg: float, phase_days: float = 0.0) -> np.ndarray:
    out = np.empty(365)
    for n in range(1, 366):
        try:
            out[n - 1] = day_length_hours(latitude_deg, ((n - 1 + phase_days) % 365) + 1)
        except PolarLightError:
            out[n - 1] = np.nan
    return out


def solve_date(
    day_lengths: list[float],
    latitude_deg: float,
    day_offsets: list[int] | None = None,
    tie_band_hours: float = 2.0 / 60.0,
    phase_days: float = 0.0,
) -> DateEstimate:
    """Recover the day-of-year of the first observation from day lengths.

    Scans all 365 alignments minimizing the mean absolute difference from
    the model curve; the day-length trend picks between the two annual
    branches. Near solstices the cost curve is flat, so a plausibility
    interval is reported alongside the point estimate.

    An observed day's length is set by the declination at that day's solar
    noon; callers that know the site longitude should pass the noon
    fraction of the UTC day as `phase_days` so the model is sampled at the
    matching sub-day phase.
    """
    if len(day_lengths) < 3:
        raise ValueError("need day lengths for at least 3 days")
    obs = np.asarray(day_lengths, dtype=float)
    offsets = np.asarray(
        day_offsets if day_offsets is not None else range(len(obs)), dtype=int
    )
    model = _model_lengths(latitude_deg, phase_days)
    costs = np.empty(365)
    for n0 in range(365):
        idx = (n0 + offsets) % 365
        costs[n0] = np.nanmean(np.abs(model[idx] - obs))
    best = int(np.nanargmin(costs))
    band = np.nanmin(costs) + max(tie_band_hours, 0.25 * float(np.nanmin(costs)))
    ok = costs <= band
    lo = 0
    while ok[(best - lo - 1) % 365] and lo < 182:
        lo += 1
    hi = 0
    while ok[(best + hi + 1) % 365] and hi < 182:
        hi += 1
    slope = float(np.polyfit(offsets, obs, 1)[0]) if len(obs) > 1 else 0.0
    return DateEstimate(
        day_of_year=best + 1,
        interval_lo=lo,
        interval_hi=hi,
        trend=1 if slope >= 0 else -1,
        cost_hours=float(costs[best]),
    )


def _year_start_epoch(epoch_s: float) -> float:
    year = datetime.fromtimestamp(epoch_s, tz=timezone.utc).year
    return datetime(year, 1, 1, tzinfo=timezone.utc).timestamp()


def reconstruct_unanchored(
    times_local_s,
    light_values,
    model: SolarModel,
    epoch_hint_s: float,
    mote: int = 0,
    epoch: int = 0,
    threshold_frac: float = 0.10,
    max_residual_s: float = 1200.0,
) -> ClockSegment | None:
    """Light-based clock fit for a segment with too few anchors.

    Needs at least three detected days. The date comes from solve_date;
    the per-day dawn-dusk midpoints are then aligned with modeled solar
    noon (equation-of-time corrected when the model says so) and a clock
    line is fitted through the (local noon, UTC noon) pairs. Returns None
    when the trace has no usable daylight structure.
    """
    det = detect_daylight(times_local_s, light_values, threshold_frac)
    days = [d for d in det.days if d.complete]
    if len(days) < 3:
        return None
    noons = np.array([d.noon_local_s for d in days])
    offsets = np.rint((noons - noons[0]) / DAY_S).astype(int)
    keep = np.concatenate([[True], np.diff(offsets) > 0])
    days = [d for d, k in zip(days, keep) if k]
    noons, offsets = noons[keep], offsets[keep]
    if len(days) < 3:
        return None
    lengths = [d.length_hours for d in days]
    noon_phase = ((12.0 - model.longitude_deg / 15.0) / 24.0) % 1.0
    est = solve_date(
        lengths, model.latitude_deg, day_offsets=list(offsets), phase_days=noon_phase
    )

    # resolve the estimated day-of-year to an absolute date near the hint
    year_start = _year_start_epoch(epoch_hint_s)
    candidates = [
        year_start + off + (est.day_of_year - 1) * DAY_S
        for off in (-365 * DAY_S, 0.0, 365 * DAY_S)
    ]
    day0_start = min(candidates, key=lambda c: abs(c - epoch_hint_s))

    anchors = []
    for i, day in enumerate(days):
        doy = est.day_of_year + int(offsets[i])
        noon_utc = (
            day0_start
            + offsets[i] * DAY_S
            + model.noon_utc_hours(((doy - 1 + noon_phase) % 365) + 1) * 3600.0
        )
        anchors.append((day.noon_local_s, noon_utc))

    span = anchors[-1][0] - anchors[0][0]
    if span >= 14 * DAY_S:
        a, b, rms = fit_line(anchors)
    else:
        # too short to trust a fitted rate; pin the nominal rate
        a = 1.0
        residuals = [g - l for l, g in anchors]
        b = float(np.median(residuals))
        rms = float(np.sqrt(np.mean((np.array(residuals) - b) ** 2)))
    if a <= 0 or rms > max_residual_s:
        return None
    return ClockSegment(
        mote=mote,
        epoch=epoch,
        local_lo=float(times_local_s[0]),
        local_hi=float(times_local_s[-1]),
        slope=a,
        offset=b,
        anchors_used=len(anchors),
        residual_rms=rms,
        method="light",
    )
