"""Scenario files: flat dotted keys in TOML, validated against known settings."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import tomli

from .energy import PowerProfile
from .nav import NavConfig
from .orchestrator import STRATEGIES
from .world import MapError, WorldMap, load_map

# key -> (type, default); None defaults are resolved from the map at build time
DEFAULTS: dict[str, tuple[type, object]] = {
    "map": (str, "factory.map"),
    "robots": (int, 1),
    "T_max_s": (float, 240.0),
    "dt_s": (float, 0.1),
    "strategy": (str, "REACT"),
    "always_on": (bool, False),
    "seed": (int, 1),
    "link_latency_ms": (float, 0.0),
    "energy.idle_w": (float, 2.0),
    "energy.locomotion_w_per_mps": (float, 10.0),
    "energy.sensing_w": (float, 17.0),
    "energy.capacity_j": (float, 8245.96),
    "nav.v_max": (float, 1.0),
    "nav.v_min": (float, 0.1),
    "nav.d_slow": (float, 1.0),
    "nav.robot_radius_m": (float, 0.2),
    "nav.stuck_timeout_s": (float, 5.0),
    "oros.subarea_size_m": (float, 10.0),
    "oros.sigma": (float, None),
    "oros.delta": (float, 0.95),
    "oros.horizon_s": (float, 60.0),
    "perception.min_region_cells": (int, 4),
    "perception.size_threshold": (int, 40),
    "react.realtime_period_s": (float, 1.0),
    "react.lambda": (float, None),
    "lidar.n_rays": (int, 360),
    "lidar.max_range_m": (float, 8.0),
}


class ScenarioError(ValueError):
    """Bad scenario content; ``key`` or ``line`` locate the problem."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class Scenario:
    settings: dict
    world: WorldMap = field(compare=False, repr=False)
    map_text: str = field(repr=False, default="")

    def __getitem__(self, key: str):
        return self.settings[key]

    @property
    def robots(self) -> int:
        return self.settings["robots"]

    @property
    def strategy(self) -> str:
        return self.settings["strategy"]

    @property
    def always_on(self) -> bool:
        return self.settings["always_on"]

    @property
    def seed(self) -> int:
        return self.settings["seed"]

    @property
    def dt_s(self) -> float:
        return self.settings["dt_s"]

    @property
    def T_max(self) -> int:
        return int(round(self.settings["T_max_s"] / self.settings["dt_s"]))

    @property
    def profile(self) -> PowerProfile:
        s = self.settings
        return PowerProfile(s["energy.locomotion_w_per_mps"], s["energy.sensing_w"], s["energy.idle_w"])

    @property
    def capacity_j(self) -> float:
        return self.settings["energy.capacity_j"]

    @property
    def nav(self) -> NavConfig:
        s = self.settings
        return NavConfig(s["nav.v_max"], s["nav.v_min"], s["nav.d_slow"], s["nav.robot_radius_m"], s["nav.stuck_timeout_s"])

    @property
    def sigma(self) -> float:
        sig = self.settings["oros.sigma"]
        return 1.0 / (self.robots * self.capacity_j) if sig is None else sig

    @property
    def lam(self) -> float:
        lam = self.settings["react.lambda"]
        return 0.25 * math.hypot(self.world.width_m, self.world.height_m) if lam is None else lam

    def replace(self, **overrides) -> "Scenario":
        """Copy with dotted-key overrides (use ``__`` for ``.`` in keyword names)."""
        flat = dict(self.settings)
        for k, v in overrides.items():
            flat[k.replace("__", ".")] = v
        return build_scenario(flat, world=self.world, map_text=self.map_text)


def bundled_map_text(name: str) -> str:
    return resources.files("react_sim.maps").joinpath(name).read_text()


def _coerce(key: str, value):
    kind, _ = DEFAULTS[key]
    if value is None:
        return None
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ScenarioError(f"{key} expects a boolean, got {value!r}", key=key)
    if kind is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ScenarioError(f"{key} expects an integer, got {value!r}", key=key)
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"{key} expects an integer, got {value!r}", key=key) from None
    if kind is float:
        if isinstance(value, bool):
            raise ScenarioError(f"{key} expects a number, got {value!r}", key=key)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"{key} expects a number, got {value!r}", key=key) from None
    return str(value)


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value parsed as a TOML scalar when possible."""
    if "=" not in text:
        raise ScenarioError(f"override {text!r} is not key=value")
    key, raw = (p.strip() for p in text.split("=", 1))
    if key not in DEFAULTS:
        raise ScenarioError(f"unknown key {key!r}", key=key)
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key, _coerce(key, value)


def _flatten(table: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in table.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


def _resolve_map(name: str, base_dir: Path | None) -> str:
    candidates = [Path(name)]
    if base_dir is not None and not Path(name).is_absolute():
        candidates.insert(0, base_dir / name)
    for p in candidates:
        if p.is_file():
            return p.read_text()
    try:
        return bundled_map_text(Path(name).name)
    except (FileNotFoundError, OSError):
        raise ScenarioError(f"map file {name!r} not found", key="map") from None


def build_scenario(
    values: dict,
    base_dir: Path | None = None,
    world: WorldMap | None = None,
    map_text: str | None = None,
) -> Scenario:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ScenarioError(f"unknown key {unknown[0]!r}", key=unknown[0])
    settings = {k: d for k, (_, d) in DEFAULTS.items()}
    for k, v in values.items():
        settings[k] = _coerce(k, v)

    if settings["strategy"] not in STRATEGIES:
        raise ScenarioError(f"strategy must be one of {', '.join(STRATEGIES)}", key="strategy")
    if settings["dt_s"] <= 0:
        raise ScenarioError("dt_s must be > 0", key="dt_s")
    ticks = settings["T_max_s"] / settings["dt_s"]
    if settings["T_max_s"] <= 0 or abs(ticks - round(ticks)) > 1e-6:
        raise ScenarioError("T_max_s must be a positive multiple of dt_s", key="T_max_s")
    if settings["robots"] < 1:
        raise ScenarioError("robots must be >= 1", key="robots")
    if settings["link_latency_ms"] < 0:
        raise ScenarioError("link_latency_ms must be >= 0", key="link_latency_ms")
    if settings["lidar.n_rays"] < 1:
        raise ScenarioError("lidar.n_rays must be >= 1", key="lidar.n_rays")
    if not 0 < settings["oros.delta"] <= 1:
        raise ScenarioError("oros.delta must be in (0, 1]", key="oros.delta")
    for key in ("energy.idle_w", "energy.locomotion_w_per_mps"):
        if settings[key] < 0:
            raise ScenarioError(f"{key} must be >= 0", key=key)
    if settings["energy.sensing_w"] <= 0:
        raise ScenarioError("energy.sensing_w must be > 0", key="energy.sensing_w")

    if world is None:
        map_text = _resolve_map(settings["map"], base_dir)
        try:
            world = load_map(map_text)
        except MapError as exc:
            raise ScenarioError(f"map: {exc}", key="map") from None
    if settings["robots"] > len(world.spawn_points):
        raise ScenarioError(
            f"robots={settings['robots']} exceeds {len(world.spawn_points)} spawn points", key="robots"
        )
    return Scenario(settings, world, map_text or "")


def load_scenario(path: str | os.PathLike, overrides: dict | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {str(path)!r}: {exc.strerror}") from None
    try:
        table = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        raise ScenarioError(f"parse error: {exc}", line=line) from None
    values = _flatten(table)
    values.update(overrides or {})
    return build_scenario(values, base_dir=path.parent)
