"""Telemetry recording, stability classification and export.

The classifier operationalizes three failure signatures on the settled
window (last 25% of the run, at least 60 s): a sustained trend escaping
the nominal band (deviating), a large alternating signal (oscillating),
and a tight settle away from 50 Hz (steady-state error). Thresholds are
parameters; the defaults below are what the shipped scenarios assume.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

NOMINAL_BAND = (49.9, 50.1)

CSV_HEADER = "tick,time_s,consumption_mw,production_mw,true_f_hz,measured_f_hz,command_mw,delivered_mw,soc_mwh,attacks"


@dataclass(frozen=True)
class TelemetryRecord:
    tick: int
    time_s: float
    consumption_mw: float
    production_mw: float
    true_f_hz: float
    measured_f_hz: float | None  # None until the controller saw a packet
    command_mw: float
    delivered_mw: float
    soc_mwh: float
    attacks: str  # compact flags, e.g. "delay@s2c,la"

    def csv_row(self) -> str:
        measured = "" if self.measured_f_hz is None else repr(self.measured_f_hz)
        return ",".join(
            [
                str(self.tick),
                repr(self.time_s),
                repr(self.consumption_mw),
                repr(self.production_mw),
                repr(self.true_f_hz),
                measured,
                repr(self.command_mw),
                repr(self.delivered_mw),
                repr(self.soc_mwh),
                self.attacks,
            ]
        )


class TelemetryLog:
    """Append-only per-tick log for one run."""

    def __init__(self, tick_hz: int):
        self.tick_hz = tick_hz
        self.records: list[TelemetryRecord] = []

    def append(self, record: TelemetryRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def true_f(self) -> np.ndarray:
        return np.array([r.true_f_hz for r in self.records])

    def to_csv(self, path: str, decimation: int = 1) -> None:
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        with open(path, "w", newline="") as f:
            f.write(CSV_HEADER + "\n")
            for record in self.records[::decimation]:
                f.write(record.csv_row() + "\n")


@dataclass(frozen=True)
class ClassifierParams:
    tick_hz: int = 50
    settled_fraction: float = 0.25
    min_window_s: float = 60.0
    slope_thresh_hz_per_s: float = 2e-4
    osc_p2p_hz: float = 0.05
    zero_crossing_thresh: int = 10
    # An oscillation must also keep moving: if the trace sits inside
    # +-osc_p2p/2 of the window mean more than this fraction of the time,
    # it is an isolated-excursion pattern (e.g. a pulse train with full
    # recovery), not an oscillation.
    quiet_fraction_max: float = 0.5
    sse_std_hz: float = 0.01
    sse_mean_offset_hz: float = 0.01
    band: tuple[float, float] = NOMINAL_BAND


@dataclass(frozen=True)
class StabilityReport:
    classification: str  # stable | oscillating | deviating | steady_state_error
    settled_mean_hz: float
    settled_std_hz: float
    peak_to_peak_hz: float
    abnormal_share: float
    band_violations: int

    def to_dict(self) -> dict:
        return asdict(self)


def settled_window(series: np.ndarray, params: ClassifierParams) -> np.ndarray:
    """Last 25% of the run, widened to at least min_window_s."""
    n = len(series)
    window_ticks = max(
        int(n * params.settled_fraction),
        int(params.min_window_s * params.tick_hz),
    )
    window_ticks = min(window_ticks, n)
    return series[n - window_ticks :]


def abnormal_share(series: np.ndarray, half_band_hz: float = 0.01) -> float:
    """Fraction of samples further than half_band from 50 Hz."""
    if len(series) == 0:
        raise ValueError("empty series")
    return float(np.mean(np.abs(series - 50.0) > half_band_hz))


def zero_crossings(values: np.ndarray) -> int:
    signs = np.sign(values)
    nonzero = signs[signs != 0]
    if len(nonzero) < 2:
        return 0
    return int(np.sum(nonzero[:-1] != nonzero[1:]))


def classify_stability(series: np.ndarray, params: ClassifierParams | None = None) -> StabilityReport:
    """Classify one frequency trace. Rules apply in order on the settled
    window W: deviating, oscillating, steady-state error, else stable."""
    params = params or ClassifierParams()
    min_ticks = int(params.min_window_s * params.tick_hz)
    if len(series) < min_ticks:
        raise ValueError(f"series too short: {len(series)} ticks < {min_ticks}")
    window = settled_window(series, params)
    mean = float(np.mean(window))
    std = float(np.std(window))
    p2p = float(np.max(window) - np.min(window))
    t = np.arange(len(window)) / params.tick_hz
    slope = float(np.polyfit(t, window, 1)[0])
    fitted_end = mean + slope * (t[-1] - float(np.mean(t)))
    lo, hi = params.band

    quiet_fraction = float(np.mean(np.abs(window - mean) < params.osc_p2p_hz / 2))

    if abs(slope) > params.slope_thresh_hz_per_s and not lo <= fitted_end <= hi:
        classification = "deviating"
    elif (
        p2p > params.osc_p2p_hz
        and zero_crossings(window - mean) > params.zero_crossing_thresh
        and quiet_fraction < params.quiet_fraction_max
    ):
        classification = "oscillating"
    elif std < params.sse_std_hz and abs(mean - 50.0) > params.sse_mean_offset_hz:
        classification = "steady_state_error"
    else:
        classification = "stable"

    return StabilityReport(
        classification=classification,
        settled_mean_hz=mean,
        settled_std_hz=std,
        peak_to_peak_hz=p2p,
        abnormal_share=abnormal_share(series),
        band_violations=int(np.sum((series < lo) | (series > hi))),
    )


def export(log: TelemetryLog, report: StabilityReport, out_dir: str,
           seed: int, scenario_hash: str, decimation: int = 1) -> tuple[str, str]:
    """Write telemetry.csv and report.json; returns both paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "telemetry.csv")
    json_path = os.path.join(out_dir, "report.json")
    log.to_csv(csv_path, decimation=decimation)
    payload = {
        "classification": report.classification,
        "settled_mean_hz": report.settled_mean_hz,
        "settled_std_hz": report.settled_std_hz,
        "peak_to_peak_hz": report.peak_to_peak_hz,
        "abnormal_share": report.abnormal_share,
        "band_violations": report.band_violations,
        "seed": seed,
        "scenario_hash": scenario_hash,
    }
    with open(json_path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=False)
        f.write("\n")
    return csv_path, json_path
