"""Scenario files: parsing, validation, serialization, sweep addressing.

A scenario is a YAML document with the canonical sections below. Unknown
keys are rejected everywhere, all values are range-checked before a run
starts, and parse(serialize(config)) round-trips exactly.

    schema_version: 1
    name: baseline
    seed: 42
    clock:      {tick_hz, duration_s}
    grid:       {consumption: {...}, noise_mw}
    sensor:     {interval_ticks}
    status:     {interval_ticks}
    battery:    {power_rating_mw, capacity_mwh, initial_soc_mwh}
    controller: {kp, ki, kd, setpoint_hz, output_limit_mw, dt_max_s}
    links:      {s2c: {base_latency_s, allow_reorder}, c2b: ..., b2c_status: ...}
    attacks:    {delay?, drop?, fdi?, replay?, load_alter?, triggers?}
    outputs:    {dir, telemetry_decimation}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict, replace
from typing import Any

import yaml

from bessim.attacks import (
    FdiSpec,
    LoadAlterSpec,
    ReplaySpec,
    TriggerRule,
    TRIGGER_MODES,
)
from bessim.battery import BatterySpec
from bessim.controller import PidConfig
from bessim.link import LINK_IDS, DelaySpec, DropSpec

SCHEMA_VERSION = 1

# Reference controller tuning, found by the grid-search calibration in
# bessim.calibrate (see README): smallest ITAE on the no-attack scenario
# subject to containment and the qualitative attack-response behaviors.
DEFAULT_KP = 1.9
DEFAULT_KI = 1.8
DEFAULT_KD = 0.0


class ScenarioError(ValueError):
    """Raised for any schema or range violation in a scenario document."""


def _check_keys(mapping: dict, allowed: tuple[str, ...], where: str) -> None:
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{where}: expected a mapping, got {type(mapping).__name__}")
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {unknown}")


def _number(mapping: dict, key: str, where: str, default=None, minimum=None, maximum=None):
    value = mapping.get(key, default)
    if value is None:
        if default is None and key not in mapping:
            raise ScenarioError(f"{where}: missing required key '{key}'")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}.{key}: expected a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{where}.{key}: {value} below minimum {minimum}")
    if maximum is not None and value > maximum:
        raise ScenarioError(f"{where}.{key}: {value} above maximum {maximum}")
    return value


def _integer(mapping: dict, key: str, where: str, default=None, minimum=None):
    value = _number(mapping, key, where, default=default, minimum=minimum)
    if value is None:
        return None
    if int(value) != value:
        raise ScenarioError(f"{where}.{key}: expected an integer, got {value!r}")
    return int(value)


def _pair(mapping: dict, key: str, where: str, default=(0.0, 0.0)) -> tuple[float, float]:
    value = mapping.get(key, list(default))
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{where}.{key}: expected [lo, hi]")
    lo, hi = float(value[0]), float(value[1])
    return (lo, hi)


@dataclass(frozen=True)
class ClockConfig:
    tick_hz: int = 50
    duration_s: float = 600.0


@dataclass(frozen=True)
class ConsumptionConfig:
    kind: str = "synthetic"  # synthetic | csv
    # synthetic
    base_mw: float = 210.0
    drift_mw_per_min: float = 0.0
    noise_per_minute_mw: float = 0.0
    minutes: int = 82
    reverse_after_minute: int | None = None
    # csv
    path: str | None = None
    scale: float = 0.02
    window: tuple[int, int] | None = None


@dataclass(frozen=True)
class GridConfig:
    consumption: ConsumptionConfig = field(default_factory=ConsumptionConfig)
    noise_mw: float = 0.05


@dataclass(frozen=True)
class SensorConfig:
    interval_ticks: int = 50


@dataclass(frozen=True)
class StatusConfig:
    interval_ticks: int = 50


@dataclass(frozen=True)
class LinkSetting:
    base_latency_s: float = 0.02
    allow_reorder: bool = True


@dataclass(frozen=True)
class LinkedDelay:
    link: str
    spec: DelaySpec


@dataclass(frozen=True)
class LinkedDrop:
    link: str
    spec: DropSpec


@dataclass(frozen=True)
class LinkedFdi:
    link: str
    spec: FdiSpec


@dataclass(frozen=True)
class LinkedReplay:
    link: str
    spec: ReplaySpec


@dataclass(frozen=True)
class TriggerConfig:
    metric: str
    op: str
    value: float
    mode: str
    action: dict


@dataclass(frozen=True)
class AttacksConfig:
    delay: LinkedDelay | None = None
    drop: LinkedDrop | None = None
    fdi: LinkedFdi | None = None
    replay: LinkedReplay | None = None
    load_alter: LoadAlterSpec | None = None
    triggers: tuple[TriggerConfig, ...] = ()


@dataclass(frozen=True)
class OutputsConfig:
    dir: str = "out"
    telemetry_decimation: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "scenario"
    seed: int = 42
    clock: ClockConfig = field(default_factory=ClockConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    status: StatusConfig = field(default_factory=StatusConfig)
    battery: BatterySpec = field(default_factory=BatterySpec)
    controller: PidConfig = field(
        default_factory=lambda: PidConfig(kp=DEFAULT_KP, ki=DEFAULT_KI, kd=DEFAULT_KD)
    )
    links: dict[str, LinkSetting] = field(
        default_factory=lambda: {link: LinkSetting() for link in LINK_IDS}
    )
    attacks: AttacksConfig = field(default_factory=AttacksConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and serialize_scenario(self) == serialize_scenario(other)


# ---------------------------------------------------------------------------
# parsing


def _parse_consumption(raw: dict) -> ConsumptionConfig:
    where = "grid.consumption"
    _check_keys(
        raw,
        ("kind", "base_mw", "drift_mw_per_min", "noise_per_minute_mw", "minutes",
         "reverse_after_minute", "path", "scale", "window"),
        where,
    )
    kind = raw.get("kind", "synthetic")
    if kind not in ("synthetic", "csv"):
        raise ScenarioError(f"{where}.kind: must be 'synthetic' or 'csv'")
    if kind == "csv":
        path = raw.get("path")
        if not path:
            raise ScenarioError(f"{where}: csv consumption requires 'path'")
        window = raw.get("window")
        if window is not None:
            if not isinstance(window, (list, tuple)) or len(window) != 2:
                raise ScenarioError(f"{where}.window: expected [start_minute, end_minute]")
            window = (int(window[0]), int(window[1]))
        return ConsumptionConfig(
            kind="csv",
            path=str(path),
            scale=float(_number(raw, "scale", where, default=0.02, minimum=1e-12)),
            window=window,
        )
    reverse = raw.get("reverse_after_minute")
    return ConsumptionConfig(
        kind="synthetic",
        base_mw=float(_number(raw, "base_mw", where, default=210.0, minimum=1e-9)),
        drift_mw_per_min=float(_number(raw, "drift_mw_per_min", where, default=0.0)),
        noise_per_minute_mw=float(_number(raw, "noise_per_minute_mw", where, default=0.0, minimum=0.0)),
        minutes=_integer(raw, "minutes", where, default=82, minimum=2),
        reverse_after_minute=int(reverse) if reverse is not None else None,
    )


def _parse_fdi(raw: dict, where: str) -> FdiSpec:
    _check_keys(
        raw,
        ("link", "interval", "offset", "randomness", "base", "scale", "ramp_rate",
         "pulse_magnitude", "pulse_every_n", "start_s", "stop_s"),
        where,
    )
    stop = raw.get("stop_s")
    try:
        return FdiSpec(
            interval=_integer(raw, "interval", where, default=1, minimum=1),
            offset=float(_number(raw, "offset", where, default=0.0)),
            randomness=_pair(raw, "randomness", where),
            base=None if raw.get("base") is None else float(raw["base"]),
            scale=float(_number(raw, "scale", where, default=1.0)),
            ramp_rate=float(_number(raw, "ramp_rate", where, default=0.0)),
            pulse_magnitude=float(_number(raw, "pulse_magnitude", where, default=0.0)),
            pulse_every_n=_integer(raw, "pulse_every_n", where, default=0, minimum=0),
            start_s=float(_number(raw, "start_s", where, default=0.0, minimum=0.0)),
            stop_s=None if stop is None else float(stop),
        )
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _parse_load_alter(raw: dict) -> LoadAlterSpec:
    where = "attacks.load_alter"
    _check_keys(raw, ("interval_ticks", "offset_mw", "randomness_mw", "start_s", "stop_s"), where)
    stop = raw.get("stop_s")
    try:
        return LoadAlterSpec(
            interval_ticks=_integer(raw, "interval_ticks", where, default=50, minimum=1),
            offset_mw=float(_number(raw, "offset_mw", where, default=0.0)),
            randomness_mw=_pair(raw, "randomness_mw", where),
            start_s=float(_number(raw, "start_s", where, default=0.0, minimum=0.0)),
            stop_s=None if stop is None else float(stop),
        )
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _require_link(raw: dict, where: str) -> str:
    link = raw.get("link")
    if link not in LINK_IDS:
        raise ScenarioError(f"{where}.link: must be one of {list(LINK_IDS)}, got {link!r}")
    return link


def _parse_attacks(raw: dict) -> AttacksConfig:
    where = "attacks"
    _check_keys(raw, ("delay", "drop", "fdi", "replay", "load_alter", "triggers"), where)
    delay = drop = fdi = replay = load_alter = None
    triggers: list[TriggerConfig] = []

    if raw.get("delay") is not None:
        sub = raw["delay"]
        _check_keys(sub, ("link", "mode", "constant_s", "min_s", "max_s"), f"{where}.delay")
        link = _require_link(sub, f"{where}.delay")
        try:
            spec = DelaySpec(
                mode=sub.get("mode", "constant"),
                constant_s=float(_number(sub, "constant_s", f"{where}.delay", default=0.0, minimum=0.0)),
                min_s=float(_number(sub, "min_s", f"{where}.delay", default=0.0, minimum=0.0)),
                max_s=float(_number(sub, "max_s", f"{where}.delay", default=0.0, minimum=0.0)),
            )
        except ValueError as exc:
            raise ScenarioError(f"{where}.delay: {exc}") from exc
        delay = LinkedDelay(link=link, spec=spec)

    if raw.get("drop") is not None:
        sub = raw["drop"]
        _check_keys(sub, ("link", "drop_rate"), f"{where}.drop")
        link = _require_link(sub, f"{where}.drop")
        rate = _number(sub, "drop_rate", f"{where}.drop", default=0.0, minimum=0.0, maximum=1.0)
        drop = LinkedDrop(link=link, spec=DropSpec(drop_rate=float(rate)))

    if raw.get("fdi") is not None:
        sub = raw["fdi"]
        link = _require_link(sub, f"{where}.fdi")
        fdi = LinkedFdi(link=link, spec=_parse_fdi(sub, f"{where}.fdi"))

    if raw.get("replay") is not None:
        sub = raw["replay"]
        _check_keys(sub, ("link", "record_duration_s", "replay_duration_s", "start_s"), f"{where}.replay")
        link = _require_link(sub, f"{where}.replay")
        try:
            spec = ReplaySpec(
                record_duration_s=float(_number(sub, "record_duration_s", f"{where}.replay", minimum=1e-9)),
                replay_duration_s=float(_number(sub, "replay_duration_s", f"{where}.replay", minimum=1e-9)),
                start_s=float(_number(sub, "start_s", f"{where}.replay", default=0.0, minimum=0.0)),
            )
        except ValueError as exc:
            raise ScenarioError(f"{where}.replay: {exc}") from exc
        replay = LinkedReplay(link=link, spec=spec)

    if fdi is not None and replay is not None and fdi.link == replay.link:
        raise ScenarioError(f"{where}: fdi and replay cannot share link '{fdi.link}'")

    if raw.get("load_alter") is not None:
        load_alter = _parse_load_alter(raw["load_alter"])

    for i, sub in enumerate(raw.get("triggers") or []):
        twhere = f"{where}.triggers[{i}]"
        _check_keys(sub, ("when", "mode", "action"), twhere)
        when = sub.get("when")
        _check_keys(when, ("metric", "op", "value"), f"{twhere}.when")
        mode = sub.get("mode", "continuous")
        if mode not in TRIGGER_MODES:
            raise ScenarioError(f"{twhere}.mode: must be one of {list(TRIGGER_MODES)}")
        action = sub.get("action")
        if not isinstance(action, dict) or "kind" not in action:
            raise ScenarioError(f"{twhere}.action: expected a mapping with 'kind'")
        # Validate by constructing a throwaway rule.
        try:
            TriggerRule(
                metric=when.get("metric"),
                op=when.get("op"),
                value=float(_number(when, "value", f"{twhere}.when")),
                action=dict(action),
                mode=mode,
            )
        except ValueError as exc:
            raise ScenarioError(f"{twhere}: {exc}") from exc
        triggers.append(
            TriggerConfig(
                metric=when["metric"],
                op=when["op"],
                value=float(when["value"]),
                mode=mode,
                action=dict(action),
            )
        )

    return AttacksConfig(
        delay=delay, drop=drop, fdi=fdi, replay=replay,
        load_alter=load_alter, triggers=tuple(triggers),
    )


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    _check_keys(
        raw,
        ("schema_version", "name", "seed", "clock", "grid", "sensor", "status",
         "battery", "controller", "links", "attacks", "outputs"),
        "scenario",
    )
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")

    clock_raw = raw.get("clock") or {}
    _check_keys(clock_raw, ("tick_hz", "duration_s"), "clock")
    clock = ClockConfig(
        tick_hz=_integer(clock_raw, "tick_hz", "clock", default=50, minimum=1),
        duration_s=float(_number(clock_raw, "duration_s", "clock", default=600.0, minimum=1e-9)),
    )

    grid_raw = raw.get("grid") or {}
    _check_keys(grid_raw, ("consumption", "noise_mw"), "grid")
    grid = GridConfig(
        consumption=_parse_consumption(grid_raw.get("consumption") or {}),
        noise_mw=float(_number(grid_raw, "noise_mw", "grid", default=0.05, minimum=0.0)),
    )

    sensor_raw = raw.get("sensor") or {}
    _check_keys(sensor_raw, ("interval_ticks",), "sensor")
    sensor = SensorConfig(
        interval_ticks=_integer(sensor_raw, "interval_ticks", "sensor", default=50, minimum=1)
    )

    status_raw = raw.get("status") or {}
    _check_keys(status_raw, ("interval_ticks",), "status")
    status = StatusConfig(
        interval_ticks=_integer(status_raw, "interval_ticks", "status", default=50, minimum=1)
    )

    battery_raw = raw.get("battery") or {}
    _check_keys(battery_raw, ("power_rating_mw", "capacity_mwh", "initial_soc_mwh"), "battery")
    try:
        battery = BatterySpec(
            power_rating_mw=float(_number(battery_raw, "power_rating_mw", "battery", default=2.0)),
            capacity_mwh=float(_number(battery_raw, "capacity_mwh", "battery", default=2.0)),
            initial_soc_mwh=float(_number(battery_raw, "initial_soc_mwh", "battery", default=1.0)),
        )
    except ValueError as exc:
        raise ScenarioError(f"battery: {exc}") from exc

    pid_raw = raw.get("controller") or {}
    _check_keys(pid_raw, ("kp", "ki", "kd", "setpoint_hz", "output_limit_mw", "dt_max_s"), "controller")
    try:
        controller = PidConfig(
            kp=float(_number(pid_raw, "kp", "controller", default=DEFAULT_KP, minimum=0.0)),
            ki=float(_number(pid_raw, "ki", "controller", default=DEFAULT_KI, minimum=0.0)),
            kd=float(_number(pid_raw, "kd", "controller", default=DEFAULT_KD, minimum=0.0)),
            setpoint_hz=float(_number(pid_raw, "setpoint_hz", "controller", default=50.0)),
            output_limit_mw=float(
                _number(pid_raw, "output_limit_mw", "controller",
                        default=battery.power_rating_mw, minimum=1e-9)
            ),
            dt_max_s=float(_number(pid_raw, "dt_max_s", "controller", default=2.0, minimum=1e-9)),
        )
    except ValueError as exc:
        raise ScenarioError(f"controller: {exc}") from exc

    links_raw = raw.get("links") or {}
    _check_keys(links_raw, LINK_IDS, "links")
    links = {}
    for link_id in LINK_IDS:
        sub = links_raw.get(link_id) or {}
        _check_keys(sub, ("base_latency_s", "allow_reorder"), f"links.{link_id}")
        reorder = sub.get("allow_reorder", True)
        if not isinstance(reorder, bool):
            raise ScenarioError(f"links.{link_id}.allow_reorder: expected a boolean")
        links[link_id] = LinkSetting(
            base_latency_s=float(
                _number(sub, "base_latency_s", f"links.{link_id}", default=0.02, minimum=0.0)
            ),
            allow_reorder=reorder,
        )

    attacks = _parse_attacks(raw.get("attacks") or {})

    outputs_raw = raw.get("outputs") or {}
    _check_keys(outputs_raw, ("dir", "telemetry_decimation"), "outputs")
    outputs = OutputsConfig(
        dir=str(outputs_raw.get("dir", "out")),
        telemetry_decimation=_integer(outputs_raw, "telemetry_decimation", "outputs", default=1, minimum=1),
    )

    seed = _integer(raw, "seed", "scenario", default=42)
    name = str(raw.get("name", "scenario"))

    return ScenarioConfig(
        schema_version=SCHEMA_VERSION, name=name, seed=seed, clock=clock, grid=grid,
        sensor=sensor, status=status, battery=battery, controller=controller,
        links=links, attacks=attacks, outputs=outputs,
    )


def parse_scenario(path: str) -> ScenarioConfig:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if raw is None:
        raw = {}
    return scenario_from_dict(raw)


# ---------------------------------------------------------------------------
# serialization


def serialize_scenario(cfg: ScenarioConfig) -> dict:
    """Canonical plain-dict form (YAML/JSON friendly, round-trips)."""
    out: dict[str, Any] = {
        "schema_version": cfg.schema_version,
        "name": cfg.name,
        "seed": cfg.seed,
        "clock": {"tick_hz": cfg.clock.tick_hz, "duration_s": cfg.clock.duration_s},
        "grid": {
            "consumption": _serialize_consumption(cfg.grid.consumption),
            "noise_mw": cfg.grid.noise_mw,
        },
        "sensor": {"interval_ticks": cfg.sensor.interval_ticks},
        "status": {"interval_ticks": cfg.status.interval_ticks},
        "battery": {
            "power_rating_mw": cfg.battery.power_rating_mw,
            "capacity_mwh": cfg.battery.capacity_mwh,
            "initial_soc_mwh": cfg.battery.initial_soc_mwh,
        },
        "controller": {
            "kp": cfg.controller.kp,
            "ki": cfg.controller.ki,
            "kd": cfg.controller.kd,
            "setpoint_hz": cfg.controller.setpoint_hz,
            "output_limit_mw": cfg.controller.output_limit_mw,
            "dt_max_s": cfg.controller.dt_max_s,
        },
        "links": {
            link_id: {
                "base_latency_s": setting.base_latency_s,
                "allow_reorder": setting.allow_reorder,
            }
            for link_id, setting in sorted(cfg.links.items())
        },
        "attacks": _serialize_attacks(cfg.attacks),
        "outputs": {
            "dir": cfg.outputs.dir,
            "telemetry_decimation": cfg.outputs.telemetry_decimation,
        },
    }
    return out


def _serialize_consumption(c: ConsumptionConfig) -> dict:
    if c.kind == "csv":
        out = {"kind": "csv", "path": c.path, "scale": c.scale}
        if c.window is not None:
            out["window"] = list(c.window)
        return out
    out = {
        "kind": "synthetic",
        "base_mw": c.base_mw,
        "drift_mw_per_min": c.drift_mw_per_min,
        "noise_per_minute_mw": c.noise_per_minute_mw,
        "minutes": c.minutes,
    }
    if c.reverse_after_minute is not None:
        out["reverse_after_minute"] = c.reverse_after_minute
    return out


def _serialize_attacks(a: AttacksConfig) -> dict:
    out: dict[str, Any] = {}
    if a.delay is not None:
        s = a.delay.spec
        out["delay"] = {"link": a.delay.link, "mode": s.mode, "constant_s": s.constant_s,
                        "min_s": s.min_s, "max_s": s.max_s}
    if a.drop is not None:
        out["drop"] = {"link": a.drop.link, "drop_rate": a.drop.spec.drop_rate}
    if a.fdi is not None:
        s = a.fdi.spec
        fdi: dict[str, Any] = {"link": a.fdi.link, "interval": s.interval, "offset": s.offset,
                               "randomness": list(s.randomness), "scale": s.scale,
                               "ramp_rate": s.ramp_rate, "start_s": s.start_s}
        if s.base is not None:
            fdi["base"] = s.base
        if s.pulse_every_n:
            fdi["pulse_magnitude"] = s.pulse_magnitude
            fdi["pulse_every_n"] = s.pulse_every_n
        if s.stop_s is not None:
            fdi["stop_s"] = s.stop_s
        out["fdi"] = fdi
    if a.replay is not None:
        s = a.replay.spec
        out["replay"] = {"link": a.replay.link, "record_duration_s": s.record_duration_s,
                         "replay_duration_s": s.replay_duration_s, "start_s": s.start_s}
    if a.load_alter is not None:
        s = a.load_alter
        la: dict[str, Any] = {"interval_ticks": s.interval_ticks, "offset_mw": s.offset_mw,
                              "randomness_mw": list(s.randomness_mw), "start_s": s.start_s}
        if s.stop_s is not None:
            la["stop_s"] = s.stop_s
        out["load_alter"] = la
    if a.triggers:
        out["triggers"] = [
            {"when": {"metric": t.metric, "op": t.op, "value": t.value},
             "mode": t.mode, "action": t.action}
            for t in a.triggers
        ]
    return out


def scenario_to_yaml(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(serialize_scenario(cfg), sort_keys=False)


def scenario_hash(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(serialize_scenario(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# sweep support


def set_by_path(cfg: ScenarioConfig, parameter_path: str, value: Any) -> ScenarioConfig:
    """Return a new config with one scalar field replaced by dotted path,
    e.g. 'attacks.drop.drop_rate' or 'sensor.interval_ticks'."""
    doc = serialize_scenario(cfg)
    parts = parameter_path.split(".")
    node: Any = doc
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ScenarioError(f"parameter path '{parameter_path}' not addressable at '{part}'")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ScenarioError(f"parameter path '{parameter_path}' not addressable at '{leaf}'")
    if isinstance(node[leaf], (dict, list)) and leaf != "randomness" and leaf != "randomness_mw":
        raise ScenarioError(f"parameter path '{parameter_path}' does not address a scalar")
    node[leaf] = value
    return scenario_from_dict(doc)
