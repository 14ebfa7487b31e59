"""Battery management system and battery plant.

Actuates power commands subject to the power rating and the state of
charge, integrates SoC, and reports status packets back to the controller.
Sign convention: positive power = discharge into the grid.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BatterySpec:
    power_rating_mw: float = 2.0
    capacity_mwh: float = 2.0
    initial_soc_mwh: float = 1.0

    def __post_init__(self):
        if self.power_rating_mw <= 0:
            raise ValueError("power rating must be > 0")
        if not 0 < self.initial_soc_mwh <= self.capacity_mwh:
            raise ValueError("initial SoC must be in (0, capacity]")


@dataclass
class BatteryState:
    soc_mwh: float
    delivered_power_mw: float = 0.0


@dataclass(frozen=True)
class StatusPacket:
    seq: int
    sent_tick: int
    soc_mwh: float
    delivered_power_mw: float


def actuate(command_mw: float, state: BatteryState, spec: BatterySpec, dt_s: float) -> BatteryState:
    """Apply a power command for dt seconds, clamped to rating and SoC bounds.

    Discharging is limited so SoC cannot go below zero within the step;
    charging so it cannot exceed capacity. Efficiency is 100%.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be > 0")
    delivered = max(-spec.power_rating_mw, min(spec.power_rating_mw, command_mw))
    dt_h = dt_s / 3600.0
    if delivered > 0:
        max_discharge = state.soc_mwh / dt_h
        delivered = min(delivered, max_discharge)
    elif delivered < 0:
        max_charge = (spec.capacity_mwh - state.soc_mwh) / dt_h
        delivered = max(delivered, -max_charge)
    state.soc_mwh -= delivered * dt_h
    state.delivered_power_mw = delivered
    return state


class BatterySystem:
    """One BMS with one battery, driven by the engine tick loop."""

    def __init__(self, spec: BatterySpec, status_interval_ticks: int = 50, tick_hz: int = 50):
        if status_interval_ticks < 1:
            raise ValueError("status interval must be >= 1 tick")
        self.spec = spec
        self.state = BatteryState(soc_mwh=spec.initial_soc_mwh)
        self.status_interval_ticks = status_interval_ticks
        self.dt_s = 1.0 / tick_hz
        self.command_mw = 0.0
        self.next_status_seq = 0

    def receive_command(self, power_command_mw: float) -> None:
        self.command_mw = power_command_mw

    def actuate_tick(self) -> BatteryState:
        return actuate(self.command_mw, self.state, self.spec, self.dt_s)

    def emit_status(self, tick: int) -> StatusPacket | None:
        if tick % self.status_interval_ticks != 0:
            return None
        pkt = StatusPacket(
            seq=self.next_status_seq,
            sent_tick=tick,
            soc_mwh=self.state.soc_mwh,
            delivered_power_mw=self.state.delivered_power_mw,
        )
        self.next_status_seq += 1
        return pkt
