"""Attack engine: payload mutation, replay, load alteration, triggers.

Payload attacks (FDI, replay) run inside the link transmit pipeline and
mutate values in flight. Load-altering attacks act on grid consumption
directly. Trigger rules watch live telemetry and patch attack parameters
at tick boundaries, enabling telemetry-conditioned attacks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any

from bessim.rng import RngStream

logger = logging.getLogger(__name__)


def window_active(start_s: float, stop_s: float | None, t_s: float) -> bool:
    """True while t_s is inside the [start, stop) activation window."""
    if t_s < start_s:
        return False
    return stop_s is None or t_s < stop_s


@dataclass(frozen=True)
class FdiSpec:
    """False data injection parameters; units are Hz on the measurement
    link and MW on the command link."""

    interval: int = 1
    offset: float = 0.0
    randomness: tuple[float, float] = (0.0, 0.0)
    base: float | None = None
    scale: float = 1.0
    ramp_rate: float = 0.0  # per second since activation
    pulse_magnitude: float = 0.0
    pulse_every_n: int = 0  # every Nth mutated packet; 0 disables
    start_s: float = 0.0
    stop_s: float | None = None

    def __post_init__(self):
        if self.interval < 1:
            raise ValueError("fdi interval must be >= 1")
        lo, hi = self.randomness
        if lo > hi:
            raise ValueError("fdi randomness bounds must satisfy lo <= hi")
        if self.pulse_every_n < 0:
            raise ValueError("pulse_every_n must be >= 0")

    @property
    def is_identity(self) -> bool:
        return (
            self.offset == 0.0
            and self.randomness == (0.0, 0.0)
            and self.base is None
            and self.scale == 1.0
            and self.ramp_rate == 0.0
            and self.pulse_every_n == 0
        )


def apply_fdi(
    value: float,
    spec: FdiSpec,
    packet_index: int,
    mutated_count: int,
    t_s: float,
    rng: RngStream,
) -> float:
    """Mutation pipeline in fixed order: base, ramp, scale, offset,
    randomness, pulse. Base replacement short-circuits the input value."""
    if packet_index % spec.interval != 0:
        return value
    out = value
    if spec.base is not None:
        out = spec.base
    out += spec.ramp_rate * (t_s - spec.start_s)
    out *= spec.scale
    out += spec.offset
    lo, hi = spec.randomness
    if lo != 0.0 or hi != 0.0:
        out += rng.uniform(lo, hi)
    if spec.pulse_every_n > 0 and mutated_count % spec.pulse_every_n == spec.pulse_every_n - 1:
        out += spec.pulse_magnitude
    return out


@dataclass(frozen=True)
class ReplaySpec:
    record_duration_s: float
    replay_duration_s: float
    start_s: float = 0.0

    def __post_init__(self):
        if self.record_duration_s <= 0 or self.replay_duration_s <= 0:
            raise ValueError("replay durations must be > 0")


class ReplayState:
    """PASSTHROUGH -> RECORD -> REPLAY -> PASSTHROUGH over one link.

    During RECORD values pass unchanged and are buffered; during REPLAY
    the buffer is substituted value by value, cycling if exhausted.
    """

    def __init__(self, spec: ReplaySpec):
        self.spec = spec
        self.buffer: list[float] = []
        self.cursor = 0
        self.warned_empty = False

    def phase(self, t_s: float) -> str:
        s = self.spec
        if t_s < s.start_s:
            return "passthrough"
        if t_s < s.start_s + s.record_duration_s:
            return "record"
        if t_s < s.start_s + s.record_duration_s + s.replay_duration_s:
            return "replay"
        return "passthrough"

    def step(self, value: float, t_s: float) -> float:
        phase = self.phase(t_s)
        if phase == "record":
            self.buffer.append(value)
            return value
        if phase == "replay":
            if not self.buffer:
                if not self.warned_empty:
                    logger.warning("replay with empty buffer, passing through")
                    self.warned_empty = True
                return value
            out = self.buffer[self.cursor % len(self.buffer)]
            self.cursor += 1
            return out
        return value


@dataclass(frozen=True)
class LoadAlterSpec:
    """Consumption manipulation: every `interval_ticks` a new effect
    offset + uniform(randomness) is sampled and held until the next one."""

    interval_ticks: int = 50
    offset_mw: float = 0.0
    randomness_mw: tuple[float, float] = (0.0, 0.0)
    start_s: float = 0.0
    stop_s: float | None = None

    def __post_init__(self):
        if self.interval_ticks < 1:
            raise ValueError("load alter interval must be >= 1 tick")
        lo, hi = self.randomness_mw
        if lo > hi:
            raise ValueError("load alter randomness bounds must satisfy lo <= hi")


class LoadAlterState:
    def __init__(self, spec: LoadAlterSpec, rng: RngStream):
        self.spec = spec
        self.rng = rng
        self.effect_mw = 0.0

    def effect_at(self, tick: int, t_s: float) -> float:
        if not window_active(self.spec.start_s, self.spec.stop_s, t_s):
            self.effect_mw = 0.0
            return 0.0
        if tick % self.spec.interval_ticks == 0:
            self.effect_mw = self.spec.offset_mw
            lo, hi = self.spec.randomness_mw
            if lo != 0.0 or hi != 0.0:
                self.effect_mw += self.rng.uniform(lo, hi)
        return self.effect_mw


# Telemetry fields a trigger condition may inspect.
TRIGGER_METRICS = ("time_s", "true_f", "measured_f", "battery_power", "soc", "abs_freq_error")
TRIGGER_OPS = {"gt": lambda a, b: a > b, "ge": lambda a, b: a >= b,
               "lt": lambda a, b: a < b, "le": lambda a, b: a <= b}
TRIGGER_MODES = ("once", "latched", "continuous")


@dataclass
class TriggerRule:
    """Condition over a telemetry snapshot plus a parameter patch action.

    Modes: `once` fires a single time then disarms; `latched` fires every
    tick after the condition first becomes true; `continuous` fires on
    every tick the condition holds.
    """

    metric: str
    op: str
    value: float
    action: dict[str, Any]
    mode: str = "continuous"
    fired: bool = False
    disabled: bool = False

    def __post_init__(self):
        if self.metric not in TRIGGER_METRICS:
            raise ValueError(f"unknown trigger metric {self.metric!r}")
        if self.op not in TRIGGER_OPS:
            raise ValueError(f"unknown trigger op {self.op!r}")
        if self.mode not in TRIGGER_MODES:
            raise ValueError(f"unknown trigger mode {self.mode!r}")
        if not isinstance(self.action, dict) or "kind" not in self.action:
            raise ValueError("trigger action must be a dict with a 'kind'")


def evaluate_triggers_detailed(
    rules: list[TriggerRule], snapshot: dict[str, Any]
) -> list[tuple[TriggerRule, dict[str, Any]]]:
    """Like evaluate_triggers but pairs each patch with its source rule."""
    fired = []
    for rule in rules:
        if rule.disabled:
            continue
        if rule.mode == "once" and rule.fired:
            continue
        metric_value = snapshot.get(rule.metric)
        if metric_value is None:
            continue
        hit = TRIGGER_OPS[rule.op](metric_value, rule.value)
        if rule.mode == "latched":
            hit = hit or rule.fired
        if not hit:
            continue
        rule.fired = True
        fired.append((rule, _resolve_action(rule.action, snapshot)))
    return fired


def evaluate_triggers(rules: list[TriggerRule], snapshot: dict[str, Any]) -> list[dict[str, Any]]:
    """Return the parameter patches of all rules satisfied by the snapshot."""
    return [patch for _rule, patch in evaluate_triggers_detailed(rules, snapshot)]


def _resolve_action(action: dict[str, Any], snapshot: dict[str, Any]) -> dict[str, Any]:
    """Turn a trigger action into a concrete patch dict.

    `set_la_offset` computes the consumption offset from the live battery
    power sign: `with_battery` pushes frequency the same way the battery
    is pushing it (discharging battery -> reduce consumption), the paper's
    resourceful pattern; `against_battery` is the mirrored sign.
    """
    kind = action["kind"]
    if kind == "set":
        return {"target": action["target"], "fields": dict(action["fields"])}
    if kind == "set_la_offset":
        magnitude = float(action["magnitude_mw"])
        direction = action.get("direction", "with_battery")
        battery_power = snapshot.get("battery_power") or 0.0
        sign = 1.0 if battery_power >= 0 else -1.0
        if direction == "with_battery":
            offset = -sign * magnitude
        elif direction == "against_battery":
            offset = sign * magnitude
        else:
            raise ValueError(f"unknown set_la_offset direction {direction!r}")
        return {"target": "load_alter", "fields": {"offset_mw": offset}}
    raise ValueError(f"unknown trigger action kind {kind!r}")
