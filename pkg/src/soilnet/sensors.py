"""Sensor type registry: ADC calibration maps shared by mote and pipeline.

One documented coefficient set per sensor type drives both directions:
the pipeline converts raw counts to physical units with the calibration
polynomial, and the simulated mote produces raw counts by inverting it.
Coefficients are value = c0 + c1*raw + c2*raw^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .records import ADC_MAX


@dataclass(frozen=True)
class SensorType:
    name: str
    unit: str
    c0: float
    c1: float
    c2: float = 0.0
    hard_range: tuple[float, float] | None = None
    plausible_range: tuple[float, float] | None = None

    def convert(self, raw: int) -> float:
        return self.c0 + self.c1 * raw + self.c2 * raw * raw

    def to_raw(self, value: float) -> float:
        """Inverse of the calibration polynomial (unclamped, unrounded)."""
        if self.c2 == 0.0:
            return (value - self.c0) / self.c1
        disc = self.c1 * self.c1 + 4.0 * self.c2 * (value - self.c0)
        if disc < 0:
            disc = 0.0
        return (-self.c1 + math.sqrt(disc)) / (2.0 * self.c2)


SENSOR_TYPES: dict[str, SensorType] = {
    # capacitance soil-moisture probe: VWC in m3/m3
    "ec5_vwc": SensorType(
        "ec5_vwc", "m3/m3", c0=-400.0 / 2400.0, c1=1.0 / 2400.0,
        hard_range=(0.0, 1.0), plausible_range=(0.0, 0.6),
    ),
    # linear on-board thermistor, 0.025 C/count
    "mcp9700_temp": SensorType(
        "mcp9700_temp", "degC", c0=-40.0, c1=0.025,
        hard_range=(-40.0, 85.0), plausible_range=(-20.0, 70.0),
    ),
    # high-precision buried thermistor with a quadratic calibration
    "ps103j2_temp": SensorType(
        "ps103j2_temp", "degC", c0=-40.0, c1=0.02, c2=1.2e-6,
        hard_range=(-40.0, 85.0), plausible_range=(-20.0, 70.0),
    ),
    # ambient light, raw counts pass through
    "apds9007_light": SensorType("apds9007_light", "counts", c0=0.0, c1=1.0),
}


class UnknownSensorType(KeyError):
    pass


def sensor_type(name: str) -> SensorType:
    try:
        return SENSOR_TYPES[name]
    except KeyError:
        raise UnknownSensorType(f"sensor type {name!r} not registered") from None


def convert_sample(raw_adc: int, type_name: str) -> tuple[float, str | None]:
    """Physical value plus an optional flag ('saturated' at the rail)."""
    st = sensor_type(type_name)
    value = st.convert(raw_adc)
    flag = "saturated" if raw_adc >= ADC_MAX or raw_adc <= 0 else None
    return value, flag


def transfer_to_adc(true_value: float, type_name: str, noise: float = 0.0) -> int:
    """Mote-side transfer: physical value to clamped 12-bit counts."""
    st = sensor_type(type_name)
    raw = st.to_raw(true_value) + noise
    return max(0, min(ADC_MAX, round(raw)))
