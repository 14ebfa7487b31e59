"""Frequency meter: samples true grid frequency and packetizes it."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class MeasurementPacket:
    seq: int
    sent_tick: int
    frequency_hz: float


def packetize(seq: int, tick: int, hz: float) -> MeasurementPacket:
    """Build a measurement packet; the payload is the untouched true value."""
    if not math.isfinite(hz):
        raise ValueError(f"non-finite frequency {hz!r} at tick {tick}")
    return MeasurementPacket(seq=seq, sent_tick=tick, frequency_hz=hz)


class FrequencyMeter:
    """Emits one measurement every ``interval_ticks`` ticks."""

    def __init__(self, interval_ticks: int = 50):
        if interval_ticks < 1:
            raise ValueError("sensor interval must be >= 1 tick")
        self.interval_ticks = interval_ticks
        self.next_seq = 0

    def maybe_sample(self, tick: int, frequency_hz: float) -> MeasurementPacket | None:
        if tick % self.interval_ticks != 0:
            return None
        pkt = packetize(self.next_seq, tick, frequency_hz)
        self.next_seq += 1
        return pkt
