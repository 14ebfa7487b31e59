"""Deterministic tick engine.

Advances all federates in a fixed order each tick:

  1. apply pending engine commands (FIFO, tick boundary only)
  2. grid step (consumption, load alteration, frequency)
  3. frequency meter sample, transmitted on s2c
  4. link deliveries due this tick (s2c, then c2b, then b2c_status)
  5. controller processing of delivered measurements -> commands on c2b
  6. battery actuation and status emission
  7. telemetry record
  8. trigger evaluation (patches enqueue for the next boundary)

With a fixed (scenario, seed, command schedule keyed by tick) the
telemetry byte stream is identical run to run.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields as dataclass_fields, replace
from typing import Any

from bessim.attacks import (
    FdiSpec,
    LoadAlterSpec,
    LoadAlterState,
    ReplaySpec,
    TriggerRule,
    evaluate_triggers_detailed,
    window_active,
)
from bessim.battery import BatterySystem
from bessim.controller import CloudController
from bessim.grid import Grid, generate_synthetic_consumption, load_consumption_csv
from bessim.link import LINK_IDS, DelaySpec, DropSpec, LinkConfig, NetworkLink
from bessim.metrics import TelemetryLog, TelemetryRecord
from bessim.rng import RngHub
from bessim.scenario import ScenarioConfig
from bessim.sensor import FrequencyMeter

logger = logging.getLogger(__name__)

COMMAND_KINDS = ("pause", "resume", "reset", "stop", "set_speed", "patch_attack", "patch_scenario")

PATCH_TARGETS = LINK_IDS + ("load_alter",)


class CommandError(ValueError):
    """Raised when an engine command payload fails validation."""


@dataclass(frozen=True)
class SimClock:
    tick: int = 0
    tick_hz: int = 50

    @property
    def time_s(self) -> float:
        return self.tick / self.tick_hz


@dataclass(frozen=True)
class EngineCommand:
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)
    issued_at: float = field(default_factory=time.time)


class Simulation:
    """One simulated world built from a scenario config."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.tick_hz = config.clock.tick_hz
        self.speed = 1.0
        self.paused = False
        self.stopped = False
        self._commands: deque[EngineCommand] = deque()
        self._lock = threading.Lock()
        self._init_state()

    def _init_state(self) -> None:
        cfg = self.config
        self.hub = RngHub(cfg.seed)
        self.clock = SimClock(0, self.tick_hz)

        consumption = cfg.grid.consumption
        if consumption.kind == "csv":
            series = load_consumption_csv(consumption.path, consumption.scale, consumption.window)
        else:
            series = generate_synthetic_consumption(
                consumption.base_mw,
                consumption.drift_mw_per_min,
                consumption.noise_per_minute_mw,
                consumption.minutes,
                self.hub.stream("consumption-series"),
                consumption.reverse_after_minute,
            )
        self.grid = Grid(
            series,
            noise_mw=cfg.grid.noise_mw,
            noise_rng=self.hub.stream("consumption-noise"),
        )
        self.fm = FrequencyMeter(cfg.sensor.interval_ticks)
        self.controller = CloudController(cfg.controller, self.tick_hz)
        self.battery = BatterySystem(cfg.battery, cfg.status.interval_ticks, self.tick_hz)

        attacks = cfg.attacks
        self.links: dict[str, NetworkLink] = {}
        for link_id in LINK_IDS:
            setting = cfg.links[link_id]
            link_cfg = LinkConfig(
                link_id=link_id,
                base_latency_s=setting.base_latency_s,
                allow_reorder=setting.allow_reorder,
                delay=attacks.delay.spec if attacks.delay and attacks.delay.link == link_id else None,
                drop=attacks.drop.spec if attacks.drop and attacks.drop.link == link_id else None,
                fdi=attacks.fdi.spec if attacks.fdi and attacks.fdi.link == link_id else None,
                replay=attacks.replay.spec if attacks.replay and attacks.replay.link == link_id else None,
            )
            self.links[link_id] = NetworkLink(
                link_cfg,
                self.tick_hz,
                drop_rng=self.hub.stream(f"drop:{link_id}"),
                delay_rng=self.hub.stream(f"delay:{link_id}"),
                fdi_rng=self.hub.stream(f"fdi-random:{link_id}"),
            )

        self.la_state = (
            LoadAlterState(attacks.load_alter, self.hub.stream("la-random"))
            if attacks.load_alter
            else None
        )
        self.trigger_rules = [
            TriggerRule(metric=t.metric, op=t.op, value=t.value, action=dict(t.action), mode=t.mode)
            for t in attacks.triggers
        ]
        self.telemetry = TelemetryLog(self.tick_hz)
        self._has_attacks = any(
            (attacks.delay, attacks.drop, attacks.fdi, attacks.replay, attacks.load_alter)
        )

    # ------------------------------------------------------------------
    # commands

    def enqueue_command(self, cmd: EngineCommand) -> EngineCommand:
        """Validate and queue a command; applied at the next tick boundary.

        Raises CommandError on a malformed payload; nothing is queued then.
        """
        if cmd.kind not in COMMAND_KINDS:
            raise CommandError(f"unknown command kind {cmd.kind!r}")
        if cmd.kind == "set_speed":
            value = cmd.payload.get("value")
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                raise CommandError("set_speed requires a positive numeric 'value'")
        elif cmd.kind == "patch_attack":
            self._build_patch(cmd.payload)  # dry run, raises on bad payload
        elif cmd.kind == "patch_scenario":
            self._validate_scenario_patch(cmd.payload)
        with self._lock:
            self._commands.append(cmd)
        return cmd

    def _validate_scenario_patch(self, payload: dict) -> None:
        allowed = {"sensor_interval_ticks", "status_interval_ticks", "consumption_noise_mw"}
        unknown = set(payload) - allowed
        if unknown:
            raise CommandError(f"patch_scenario: unknown field(s) {sorted(unknown)}")
        if not payload:
            raise CommandError("patch_scenario: empty payload")
        for key in ("sensor_interval_ticks", "status_interval_ticks"):
            if key in payload and (not isinstance(payload[key], int) or payload[key] < 1):
                raise CommandError(f"patch_scenario: {key} must be an integer >= 1")
        if "consumption_noise_mw" in payload:
            v = payload["consumption_noise_mw"]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                raise CommandError("patch_scenario: consumption_noise_mw must be >= 0")

    def _build_patch(self, payload: dict) -> dict[str, Any]:
        """Merge patch fields onto current specs; returns built objects.

        payload = {"target": "s2c"|"c2b"|"b2c_status"|"load_alter",
                   "fields": {...}}
        For links, fields may hold partial "delay"/"drop"/"fdi"/"replay"
        sub-specs (merged field-wise; null removes the attack).
        """
        target = payload.get("target")
        if target not in PATCH_TARGETS:
            raise CommandError(f"patch target must be one of {list(PATCH_TARGETS)}, got {target!r}")
        fields = payload.get("fields")
        if not isinstance(fields, dict) or not fields:
            raise CommandError("patch requires a non-empty 'fields' mapping")

        try:
            if target == "load_alter":
                current = self.la_state.spec if self.la_state else LoadAlterSpec()
                return {"load_alter": _merge_spec(current, fields, LoadAlterSpec)}
            link = self.links[target]
            built: dict[str, Any] = {}
            for key, sub in fields.items():
                if key == "delay":
                    built["delay"] = None if sub is None else _merge_spec(
                        link.cfg.delay or DelaySpec(), sub, DelaySpec)
                elif key == "drop":
                    built["drop"] = None if sub is None else _merge_spec(
                        link.cfg.drop or DropSpec(), sub, DropSpec)
                elif key == "fdi":
                    built["fdi"] = None if sub is None else _merge_spec(
                        link.cfg.fdi or FdiSpec(), sub, FdiSpec)
                elif key == "replay":
                    if sub is None:
                        built["replay"] = None
                    elif link.cfg.replay is not None:
                        built["replay"] = _merge_spec(link.cfg.replay, sub, ReplaySpec)
                    else:
                        built["replay"] = ReplaySpec(**_convert_fields(sub, ReplaySpec))
                else:
                    raise CommandError(f"unknown attack field {key!r} for link {target}")
            if built.get("fdi") is not None and (
                "replay" in built and built["replay"] is not None
                or "replay" not in built and link.cfg.replay is not None
            ):
                raise CommandError(f"{target}: fdi and replay are mutually exclusive")
            return built
        except CommandError:
            raise
        except (TypeError, ValueError) as exc:
            raise CommandError(str(exc)) from exc

    def _apply_pending_commands(self) -> None:
        while True:
            with self._lock:
                if not self._commands:
                    return
                cmd = self._commands.popleft()
            try:
                self._apply_command(cmd)
            except (CommandError, ValueError) as exc:
                logger.error("command %s failed at apply time: %s", cmd.kind, exc)

    def _apply_command(self, cmd: EngineCommand) -> None:
        if cmd.kind == "pause":
            self.paused = True
        elif cmd.kind == "resume":
            self.paused = False
        elif cmd.kind == "stop":
            self.stopped = True
        elif cmd.kind == "reset":
            self.reset()
        elif cmd.kind == "set_speed":
            self.speed = float(cmd.payload["value"])
        elif cmd.kind == "patch_scenario":
            payload = cmd.payload
            if "sensor_interval_ticks" in payload:
                self.fm.interval_ticks = payload["sensor_interval_ticks"]
            if "status_interval_ticks" in payload:
                self.battery.status_interval_ticks = payload["status_interval_ticks"]
            if "consumption_noise_mw" in payload:
                self.grid.noise_mw = float(payload["consumption_noise_mw"])
        elif cmd.kind == "patch_attack":
            built = self._build_patch(cmd.payload)
            target = cmd.payload["target"]
            if target == "load_alter":
                spec = built["load_alter"]
                if self.la_state is None:
                    self.la_state = LoadAlterState(spec, self.hub.stream("la-random"))
                else:
                    self.la_state.spec = spec
            else:
                self.links[target].patch(**built)
            self._has_attacks = True

    def reset(self) -> None:
        """Back to tick 0 with the same seed; telemetry cleared."""
        self.paused = False
        self.stopped = False
        self._init_state()

    # ------------------------------------------------------------------
    # stepping

    def step(self) -> bool:
        """Advance exactly one tick; returns False when paused or stopped."""
        self._apply_pending_commands()
        if self.stopped or self.paused:
            return False

        tick = self.clock.tick
        t_s = tick / self.tick_hz

        la_effect = self.la_state.effect_at(tick, t_s) if self.la_state else 0.0
        grid_state = self.grid.step(t_s, la_effect, self.battery.state.delivered_power_mw)

        sample = self.fm.maybe_sample(tick, grid_state.frequency_hz)
        if sample is not None:
            self.links["s2c"].transmit(sample.frequency_hz, sample, sample.seq, tick)

        measurements = self.links["s2c"].deliver_due(tick)
        commands = self.links["c2b"].deliver_due(tick)
        statuses = self.links["b2c_status"].deliver_due(tick)

        for value, _pkt in measurements:
            out = self.controller.on_measurement(value, tick)
            self.links["c2b"].transmit(out.power_command_mw, out, out.seq, tick)
        for _value, status_pkt in statuses:
            self.controller.on_status(status_pkt)

        for value, _pkt in commands:
            self.battery.receive_command(value)
        self.battery.actuate_tick()
        status = self.battery.emit_status(tick)
        if status is not None:
            self.links["b2c_status"].transmit(status.delivered_power_mw, status, status.seq, tick)

        production = grid_state.production_base_mw + grid_state.battery_power_mw
        record = TelemetryRecord(
            tick=tick,
            time_s=t_s,
            consumption_mw=grid_state.consumption_mw,
            production_mw=production,
            true_f_hz=grid_state.frequency_hz,
            measured_f_hz=self.controller.last_measured_hz,
            command_mw=self.battery.command_mw,
            delivered_mw=self.battery.state.delivered_power_mw,
            soc_mwh=self.battery.state.soc_mwh,
            attacks=self._attack_flags(t_s),
        )
        self.telemetry.append(record)

        if self.trigger_rules:
            snapshot = {
                "time_s": t_s,
                "true_f": grid_state.frequency_hz,
                "measured_f": self.controller.last_measured_hz,
                "battery_power": self.battery.state.delivered_power_mw,
                "soc": self.battery.state.soc_mwh,
                "abs_freq_error": abs(grid_state.frequency_hz - 50.0),
            }
            for rule, patch in evaluate_triggers_detailed(self.trigger_rules, snapshot):
                try:
                    self.enqueue_command(EngineCommand("patch_attack", patch))
                except CommandError as exc:
                    rule.disabled = True
                    logger.error("trigger patch rejected, rule disabled: %s", exc)

        self.clock = replace(self.clock, tick=tick + 1)
        return True

    def run(self, duration_s: float) -> TelemetryLog:
        """Run duration_s of simulated time (or less on stop/pause)."""
        if duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        series_span = self.grid.series.duration_s
        if duration_s > series_span:
            raise ValueError(
                f"consumption series covers {series_span}s but run needs {duration_s}s"
            )
        total = round(duration_s * self.tick_hz)
        while self.clock.tick < total:
            if not self.step():
                break
        return self.telemetry

    # ------------------------------------------------------------------

    def _attack_flags(self, t_s: float) -> str:
        if not self._has_attacks:
            return ""
        flags = []
        for link_id in LINK_IDS:
            cfg = self.links[link_id].cfg
            if cfg.delay is not None:
                flags.append(f"delay@{link_id}")
            if cfg.drop is not None and cfg.drop.drop_rate > 0:
                flags.append(f"drop@{link_id}")
            if cfg.fdi is not None and window_active(cfg.fdi.start_s, cfg.fdi.stop_s, t_s):
                flags.append(f"fdi@{link_id}")
            replay_state = self.links[link_id].replay_state
            if replay_state is not None and replay_state.phase(t_s) != "passthrough":
                flags.append(f"replay@{link_id}")
        if self.la_state is not None and window_active(
            self.la_state.spec.start_s, self.la_state.spec.stop_s, t_s
        ):
            flags.append("la")
        return "|".join(flags)

    def snapshot(self) -> dict[str, Any]:
        """Read-only state summary for external observers."""
        latest = self.telemetry.records[-1] if self.telemetry.records else None
        return {
            "tick": self.clock.tick,
            "time_s": self.clock.time_s,
            "paused": self.paused,
            "stopped": self.stopped,
            "speed": self.speed,
            "scenario_name": self.config.name,
            "latest": None if latest is None else _record_dict(latest),
            "attacks": self.attack_specs(),
        }

    def attack_specs(self) -> dict[str, Any]:
        """Current effective attack configuration, per link plus load_alter."""
        out: dict[str, Any] = {}
        for link_id in LINK_IDS:
            cfg = self.links[link_id].cfg
            out[link_id] = {
                "delay": _spec_dict(cfg.delay),
                "drop": _spec_dict(cfg.drop),
                "fdi": _spec_dict(cfg.fdi),
                "replay": _spec_dict(cfg.replay),
            }
        out["load_alter"] = _spec_dict(self.la_state.spec) if self.la_state else None
        return out


def _record_dict(record: TelemetryRecord) -> dict[str, Any]:
    return {
        "tick": record.tick,
        "time_s": record.time_s,
        "consumption_mw": record.consumption_mw,
        "production_mw": record.production_mw,
        "true_f_hz": record.true_f_hz,
        "measured_f_hz": record.measured_f_hz,
        "command_mw": record.command_mw,
        "delivered_mw": record.delivered_mw,
        "soc_mwh": record.soc_mwh,
        "attacks": record.attacks,
    }


def _spec_dict(spec) -> dict | None:
    if spec is None:
        return None
    out = asdict(spec)
    for key, value in out.items():
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


def _convert_fields(fields: dict, spec_type) -> dict:
    converted = dict(fields)
    for key in ("randomness", "randomness_mw"):
        if key in converted and isinstance(converted[key], list):
            converted[key] = tuple(converted[key])
    valid = {f.name for f in dataclass_fields(spec_type)}
    unknown = set(converted) - valid
    if unknown:
        raise CommandError(f"unknown field(s) {sorted(unknown)} for {spec_type.__name__}")
    return converted


def _merge_spec(current, fields: dict, spec_type):
    return replace(current, **_convert_fields(fields, spec_type))


def build_simulation(config: ScenarioConfig) -> Simulation:
    return Simulation(config)
