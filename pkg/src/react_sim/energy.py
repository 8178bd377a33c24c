"""Component-level battery accounting.

Power draw is idle electronics + speed-proportional locomotion + one
aggregate sensing bundle (LiDAR, perception processor and radio) that the
high-level planner may switch off on transit legs.
"""
from __future__ import annotations

from dataclasses import dataclass

DEFAULT_CAPACITY_J = 8245.96


@dataclass(frozen=True)
class PowerProfile:
    locomotion_w_per_mps: float = 10.0
    sensing_w: float = 17.0
    idle_w: float = 2.0

    def __post_init__(self):
        if min(self.locomotion_w_per_mps, self.sensing_w, self.idle_w) < 0:
            raise ValueError("power profile values must be >= 0")
        if self.sensing_w <= 0:
            raise ValueError("sensing_w must be > 0 for sensor gating to matter")


@dataclass(frozen=True)
class Battery:
    capacity_j: float = DEFAULT_CAPACITY_J
    charge_j: float = DEFAULT_CAPACITY_J

    def __post_init__(self):
        if self.capacity_j <= 0:
            raise ValueError("capacity_j must be > 0")
        if not 0.0 <= self.charge_j <= self.capacity_j:
            raise ValueError(f"charge {self.charge_j} outside [0, {self.capacity_j}]")

    @classmethod
    def full(cls, capacity_j: float = DEFAULT_CAPACITY_J) -> "Battery":
        return cls(capacity_j, capacity_j)

    @property
    def soc(self) -> float:
        return self.charge_j / self.capacity_j


@dataclass(frozen=True)
class Depleted:
    """Terminal state: the robot ran out of energy and is immobilized."""

    capacity_j: float
    shortfall_j: float = 0.0

    charge_j = 0.0


def step_energy(profile: PowerProfile, speed_mps: float, sensing_on: bool, dt_s: float) -> float:
    """Joules drawn over ``dt_s`` at constant speed and sensing state."""
    if speed_mps < 0:
        raise ValueError("speed must be >= 0")
    if dt_s <= 0:
        raise ValueError("dt must be > 0")
    power = profile.idle_w + profile.locomotion_w_per_mps * speed_mps
    if sensing_on:
        power += profile.sensing_w
    return power * dt_s


def drain(battery: Battery, joules: float) -> Battery | Depleted:
    if joules < 0:
        raise ValueError("cannot drain a negative amount")
    remaining = battery.charge_j - joules
    if remaining < 0:
        return Depleted(battery.capacity_j, -remaining)
    return Battery(battery.capacity_j, remaining)
