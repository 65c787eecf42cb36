"""Solar geometry: declination, day length, equation of time, noon timing.

These drive two things: the light-trace fallback for recovering dates and
local noon on motes that lost their clock, and the synthetic light
environment in scenarios. The declination uses the standard single-sine
approximation (error vs. ephemeris under ~1.5 degrees, adequate for
minute-level noon precision).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DAYS_PER_YEAR = 365


class PolarLightError(ValueError):
    """Sun never rises or never sets at this latitude and date."""


def declination_deg(day_of_year: float) -> float:
    return 23.45 * math.sin(2 * math.pi * (284 + day_of_year) / 365)


def day_length_hours(latitude_deg: float, day_of_year: float) -> float:
    """Sunrise-equation day length: (2/15) * arccos(-tan(lat) tan(decl))."""
    phi = math.radians(latitude_deg)
    delta = math.radians(declination_deg(day_of_year))
    x = -math.tan(phi) * math.tan(delta)
    if x <= -1.0 or x >= 1.0:
        raise PolarLightError(
            f"polar day/night at latitude {latitude_deg} on day {day_of_year}"
        )
    return (2.0 / 15.0) * math.degrees(math.acos(x))


def equation_of_time_minutes(day_of_year: float) -> float:
    """Solar noon minus mean clock noon, in minutes (annual +/-16 min wave)."""
    b = 2 * math.pi * (day_of_year - 81) / 364
    return 9.87 * math.sin(2 * b) - 7.53 * math.cos(b) - 1.5 * math.sin(b)


def solar_noon_utc_hours(
    longitude_deg: float, day_of_year: float, eot_correction: bool = True
) -> float:
    noon = 12.0 - longitude_deg / 15.0
    if eot_correction:
        noon -= equation_of_time_minutes(day_of_year) / 60.0
    return noon


def sun_elevation_sin(
    latitude_deg: float, longitude_deg: float, day_of_year: float, utc_hours: float
) -> float:
    """Sine of solar elevation; negative below the horizon."""
    phi = math.radians(latitude_deg)
    delta = math.radians(declination_deg(day_of_year))
    solar_hours = (
        utc_hours + longitude_deg / 15.0 + equation_of_time_minutes(day_of_year) / 60.0
    )
    hour_angle = math.radians(15.0 * (solar_hours - 12.0))
    return math.sin(phi) * math.sin(delta) + math.cos(phi) * math.cos(delta) * math.cos(
        hour_angle
    )


@dataclass(frozen=True)
class SolarModel:
    """Site geometry for date and noon recovery."""

    latitude_deg: float
    longitude_deg: float = 0.0
    eot_correction: bool = True

    def day_length(self, day_of_year: float) -> float:
        return day_length_hours(self.latitude_deg, day_of_year)

    def noon_utc_hours(self, day_of_year: float) -> float:
        return solar_noon_utc_hours(
            self.longitude_deg, day_of_year, self.eot_correction
        )

    def elevation_sin(self, day_of_year: float, utc_hours: float) -> float:
        return sun_elevation_sin(
            self.latitude_deg, self.longitude_deg, day_of_year, utc_hours
        )
