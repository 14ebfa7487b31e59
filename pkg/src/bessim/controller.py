"""Cloud control system: PID on frequency error -> battery power commands.

The controller consumes measurement packets in arrival order (stale
packets are not discarded), computes error against the 50 Hz setpoint and
emits a clamped power command per measurement. Integration time comes
from packet arrival spacing, so packet loss stretches the integration
step (capped at ``dt_max_s``) rather than silently freezing the integral.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PidConfig:
    kp: float  # MW per Hz
    ki: float  # MW per (Hz*s)
    kd: float = 0.0  # MW*s per Hz
    setpoint_hz: float = 50.0
    output_limit_mw: float = 2.0
    dt_max_s: float = 2.0

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("PID gains must be >= 0")
        if self.output_limit_mw <= 0:
            raise ValueError("output limit must be > 0")
        if self.dt_max_s <= 0:
            raise ValueError("dt_max_s must be > 0")


@dataclass
class PidState:
    integral: float = 0.0  # Hz*s
    last_error: float | None = None
    last_update_tick: int | None = None


@dataclass(frozen=True)
class ControlPacket:
    seq: int
    sent_tick: int
    power_command_mw: float


def pid_step(error_hz: float, dt_s: float, state: PidState, cfg: PidConfig) -> float:
    """One PID update; returns the clamped output in MW.

    Conditional integration: the integral is frozen while the output is
    saturated in the direction the error would push it further. The
    integral is also hard-clamped so |integral * ki| never exceeds the
    output limit.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be > 0")
    prev_error = state.last_error if state.last_error is not None else error_hz
    derivative = (error_hz - prev_error) / dt_s
    candidate = state.integral + error_hz * dt_s
    unclamped = cfg.kp * error_hz + cfg.ki * candidate + cfg.kd * derivative
    saturated_further = (unclamped > cfg.output_limit_mw and error_hz > 0) or (
        unclamped < -cfg.output_limit_mw and error_hz < 0
    )
    if not saturated_further:
        state.integral = candidate
    if cfg.ki > 0:
        bound = cfg.output_limit_mw / cfg.ki
        state.integral = max(-bound, min(bound, state.integral))
    output = cfg.kp * error_hz + cfg.ki * state.integral + cfg.kd * derivative
    state.last_error = error_hz
    return max(-cfg.output_limit_mw, min(cfg.output_limit_mw, output))


def dispatch(command_mw: float, headrooms_mw: list[float]) -> list[float]:
    """Split a total command across batteries proportionally to headroom."""
    if not headrooms_mw:
        raise ValueError("need at least one registered battery")
    total = sum(headrooms_mw)
    if total <= 0:
        logger.warning("zero total headroom, dispatching all-zero commands")
        return [0.0 for _ in headrooms_mw]
    return [command_mw * h / total for h in headrooms_mw]


class CloudController:
    """Processes measurements, runs the PID and emits command packets."""

    def __init__(self, cfg: PidConfig, tick_hz: int = 50):
        self.cfg = cfg
        self.tick_hz = tick_hz
        self.state = PidState()
        self.next_seq = 0
        self.last_measured_hz: float | None = None
        self.last_status = None  # most recent StatusPacket, informational only

    def on_measurement(self, frequency_hz: float, now_tick: int) -> ControlPacket:
        if not math.isfinite(frequency_hz):
            logger.warning("non-finite measurement at tick %d, commanding 0 MW", now_tick)
            return self._emit(0.0, now_tick)
        self.last_measured_hz = frequency_hz
        if self.state.last_update_tick is None:
            dt_ticks = 1
        else:
            dt_ticks = max(1, now_tick - self.state.last_update_tick)
        dt_s = min(dt_ticks / self.tick_hz, self.cfg.dt_max_s)
        error = self.cfg.setpoint_hz - frequency_hz
        command = pid_step(error, dt_s, self.state, self.cfg)
        self.state.last_update_tick = now_tick
        return self._emit(command, now_tick)

    def on_status(self, status) -> None:
        self.last_status = status

    def _emit(self, command_mw: float, tick: int) -> ControlPacket:
        pkt = ControlPacket(seq=self.next_seq, sent_tick=tick, power_command_mw=command_mw)
        self.next_seq += 1
        return pkt
