"""Distribution grid model.

Frequency follows the production/consumption balance:

    f = (production_base + battery_power) / consumption * 50 Hz

Consumption comes from a minute-wise series (CSV or synthetic), linearly
interpolated per tick, optionally with small per-tick uniform noise.
Baseline production is constant and chosen at init so the run starts
balanced at 50 Hz; the battery is the only balancing actor.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

from bessim.rng import RngStream

logger = logging.getLogger(__name__)

NOMINAL_HZ = 50.0

# Guard against division blow-up if an attack drives consumption near zero.
CONSUMPTION_FLOOR_MW = 1.0


@dataclass(frozen=True)
class ConsumptionSeries:
    """Minute-indexed consumption samples, already scaled, re-based to minute 0."""

    values_mw: tuple[float, ...]

    def __post_init__(self):
        if len(self.values_mw) < 2:
            raise ValueError("consumption series needs at least 2 minute samples")
        if any(v <= 0 for v in self.values_mw):
            raise ValueError("consumption series must be strictly positive after scaling")

    @property
    def minutes(self) -> int:
        return len(self.values_mw) - 1

    @property
    def duration_s(self) -> float:
        return self.minutes * 60.0


def load_consumption_csv(
    path: str,
    scale: float = 0.02,
    window: tuple[int, int] | None = None,
) -> ConsumptionSeries:
    """Read `minute,consumption_mw` rows, scale them and slice a minute window.

    The window is (start_minute, end_minute) inclusive of start, inclusive of
    end sample, and re-based so the first retained sample is minute 0.
    """
    if scale <= 0:
        raise ValueError("scale must be > 0")
    rows: list[tuple[int, float]] = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["minute", "consumption_mw"]:
            raise ValueError(f"{path}: expected header 'minute,consumption_mw'")
        for row in reader:
            minute = int(row["minute"])
            value = float(row["consumption_mw"])
            if value < 0:
                raise ValueError(f"{path}: negative consumption at minute {minute}")
            rows.append((minute, value))
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 rows")
    for (m0, _), (m1, _) in zip(rows, rows[1:]):
        if m1 <= m0:
            raise ValueError(f"{path}: minute indices must be strictly increasing ({m0} -> {m1})")
    if window is not None:
        start, end = window
        rows = [(m, v) for m, v in rows if start <= m <= end]
        if len(rows) < 2:
            raise ValueError(f"empty or degenerate window ({start}, {end})")
    return ConsumptionSeries(values_mw=tuple(v * scale for _, v in rows))


def generate_synthetic_consumption(
    base_mw: float,
    drift_mw_per_min: float,
    noise_mw: float,
    minutes: int,
    rng: RngStream | None = None,
    reverse_after_minute: int | None = None,
) -> ConsumptionSeries:
    """Build `minutes` samples: base + k*drift + uniform(-noise, +noise).

    Sample k sits at minute k, so the series spans minutes-1 simulated
    minutes. With ``reverse_after_minute`` the drift sign flips at that
    sample, producing a V- or peak-shaped trend (used for replay runs).
    """
    if base_mw <= 0:
        raise ValueError("base_mw must be > 0")
    if minutes < 2:
        raise ValueError("minutes must be >= 2")
    if noise_mw > 0 and rng is None:
        raise ValueError("noise requires an rng stream")
    values = []
    level = base_mw
    for k in range(minutes):
        noise = rng.uniform(-noise_mw, noise_mw) if noise_mw > 0 else 0.0
        values.append(level + noise)
        step = drift_mw_per_min
        if reverse_after_minute is not None and k >= reverse_after_minute:
            step = -drift_mw_per_min
        level += step
    if any(v <= 0 for v in values):
        raise ValueError("parameters produce non-positive consumption")
    return ConsumptionSeries(values_mw=tuple(values))


def consumption_at(series: ConsumptionSeries, time_s: float) -> float:
    """Linear interpolation between adjacent minute samples (noise excluded)."""
    if time_s < 0 or time_s > series.duration_s:
        raise ValueError(f"time {time_s}s outside series window (0..{series.duration_s}s)")
    pos = time_s / 60.0
    k = int(pos)
    if k >= series.minutes:
        return series.values_mw[-1]
    frac = pos - k
    v0 = series.values_mw[k]
    v1 = series.values_mw[k + 1]
    return v0 + (v1 - v0) * frac


def compute_frequency(production_mw: float, consumption_mw: float) -> float:
    """Grid frequency from the production/consumption balance."""
    if not math.isfinite(production_mw) or not math.isfinite(consumption_mw):
        raise ValueError("non-finite power input")
    return production_mw / consumption_mw * NOMINAL_HZ


@dataclass
class GridState:
    """Grid quantities at the current tick."""

    production_base_mw: float
    consumption_mw: float = 0.0
    battery_power_mw: float = 0.0
    frequency_hz: float = NOMINAL_HZ
    floor_clamps: int = 0


class Grid:
    """Per-tick grid stepper: consumption + load alteration -> frequency."""

    def __init__(
        self,
        series: ConsumptionSeries,
        noise_mw: float = 0.05,
        noise_rng: RngStream | None = None,
        production_base_mw: float | None = None,
    ):
        self.series = series
        self.noise_mw = noise_mw
        self.noise_rng = noise_rng
        if noise_mw > 0 and noise_rng is None:
            raise ValueError("per-tick noise requires an rng stream")
        if production_base_mw is None:
            # Start balanced: baseline production matches consumption at t=0.
            production_base_mw = consumption_at(series, 0.0)
        self.state = GridState(production_base_mw=production_base_mw)

    def step(self, time_s: float, la_effect_mw: float, battery_power_mw: float) -> GridState:
        consumption = consumption_at(self.series, time_s)
        if self.noise_mw > 0:
            consumption += self.noise_rng.uniform(-self.noise_mw, self.noise_mw)
        consumption += la_effect_mw
        if consumption < CONSUMPTION_FLOOR_MW:
            consumption = CONSUMPTION_FLOOR_MW
            self.state.floor_clamps += 1
            logger.warning("consumption clamped to floor at t=%.2fs", time_s)
        self.state.consumption_mw = consumption
        self.state.battery_power_mw = battery_power_mw
        self.state.frequency_hz = compute_frequency(
            self.state.production_base_mw + battery_power_mw, consumption
        )
        return self.state
