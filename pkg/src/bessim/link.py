"""Network links as interposition pipelines.

Every packet sent on a link passes, in order: drop decision, replay
substitution, payload mutation, latency. Without any attack configured a
link is a pure one-tick-latency FIFO. Random delays may reorder packets
(the receiver consumes in arrival order) unless ``allow_reorder`` is off.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field, replace
from typing import Any

from bessim.attacks import FdiSpec, ReplaySpec, ReplayState, apply_fdi, window_active
from bessim.rng import RngStream

logger = logging.getLogger(__name__)

LINK_IDS = ("s2c", "c2b", "b2c_status")


@dataclass(frozen=True)
class DelaySpec:
    mode: str = "constant"  # constant | uniform
    constant_s: float = 0.0
    min_s: float = 0.0
    max_s: float = 0.0

    def __post_init__(self):
        if self.mode not in ("constant", "uniform"):
            raise ValueError(f"unknown delay mode {self.mode!r}")
        if self.constant_s < 0 or self.min_s < 0:
            raise ValueError("delays must be >= 0")
        if self.mode == "uniform" and self.min_s > self.max_s:
            raise ValueError("uniform delay requires min <= max")


@dataclass(frozen=True)
class DropSpec:
    drop_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be in [0, 1]")


@dataclass(frozen=True)
class LinkConfig:
    link_id: str
    base_latency_s: float = 0.02
    allow_reorder: bool = True
    delay: DelaySpec | None = None
    drop: DropSpec | None = None
    fdi: FdiSpec | None = None
    replay: ReplaySpec | None = None

    def __post_init__(self):
        if self.link_id not in LINK_IDS:
            raise ValueError(f"unknown link id {self.link_id!r}")
        if self.base_latency_s < 0:
            raise ValueError("base latency must be >= 0")
        if self.fdi is not None and self.replay is not None:
            raise ValueError(f"{self.link_id}: fdi and replay are mutually exclusive on one link")


@dataclass(order=True)
class InFlightPacket:
    deliver_tick: int
    origin_seq: int
    payload: Any = field(compare=False)


def sample_delay(spec: DelaySpec, rng: RngStream) -> float:
    if spec.mode == "constant":
        return spec.constant_s
    return rng.uniform(spec.min_s, spec.max_s)


class NetworkLink:
    """One directed link with its queue, attack state and rng streams."""

    def __init__(self, cfg: LinkConfig, tick_hz: int, drop_rng: RngStream,
                 delay_rng: RngStream, fdi_rng: RngStream):
        self.cfg = cfg
        self.tick_hz = tick_hz
        self.drop_rng = drop_rng
        self.delay_rng = delay_rng
        self.fdi_rng = fdi_rng
        self._queue: list[InFlightPacket] = []
        self._last_fifo_tick = 0
        self.fdi_packet_index = 0
        self.fdi_mutated_count = 0
        self.replay_state = ReplayState(cfg.replay) if cfg.replay else None
        self.dropped_seqs: list[int] = []
        self.sent_count = 0

    def patch(self, **changes) -> None:
        """Replace attack/config fields live; runtime counters persist."""
        new_cfg = replace(self.cfg, **changes)
        if "replay" in changes:
            self.replay_state = ReplayState(new_cfg.replay) if new_cfg.replay else None
        self.cfg = new_cfg

    def transmit(self, payload_value: float, meta: Any, origin_seq: int, now_tick: int) -> bool:
        """Send one packet; returns False if the drop stage discarded it.

        `payload_value` is the attackable scalar (Hz or MW); `meta` rides
        along untouched and is handed back at delivery together with the
        possibly-mutated value.
        """
        self.sent_count += 1
        t_s = now_tick / self.tick_hz
        if self.cfg.drop is not None and self.cfg.drop.drop_rate > 0:
            if self.drop_rng.random() < self.cfg.drop.drop_rate:
                self.dropped_seqs.append(origin_seq)
                return False
        value = payload_value
        if self.replay_state is not None:
            value = self.replay_state.step(value, t_s)
        if self.cfg.fdi is not None and window_active(self.cfg.fdi.start_s, self.cfg.fdi.stop_s, t_s):
            idx = self.fdi_packet_index
            self.fdi_packet_index += 1
            if idx % self.cfg.fdi.interval == 0:
                value = apply_fdi(value, self.cfg.fdi, idx, self.fdi_mutated_count, t_s, self.fdi_rng)
                self.fdi_mutated_count += 1
        delay_s = 0.0
        if self.cfg.delay is not None:
            delay_s = sample_delay(self.cfg.delay, self.delay_rng)
        latency_ticks = max(1, round((self.cfg.base_latency_s + delay_s) * self.tick_hz))
        deliver_tick = now_tick + latency_ticks
        if not self.cfg.allow_reorder:
            deliver_tick = max(deliver_tick, self._last_fifo_tick)
            self._last_fifo_tick = deliver_tick
        heapq.heappush(self._queue, InFlightPacket(deliver_tick, origin_seq, (value, meta)))
        return True

    def deliver_due(self, tick: int) -> list[tuple[float, Any]]:
        """Release everything due this tick, origin order within the tick."""
        due: list[InFlightPacket] = []
        while self._queue and self._queue[0].deliver_tick <= tick:
            due.append(heapq.heappop(self._queue))
        return [pkt.payload for pkt in due]

    @property
    def pending(self) -> int:
        return len(self._queue)
