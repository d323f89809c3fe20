"""Small value types shared across the ledger, token and simulation layers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

NodeId = int

U64_MAX = 2**64 - 1


class Orbit(str, Enum):
    LEO = "LEO"
    MEO = "MEO"
    GEO = "GEO"


Vec3 = tuple[float, float, float]


def _vec3(values) -> Vec3:
    vec = tuple(float(x) + 0.0 for x in values)  # +0.0 folds -0.0 into 0.0
    if len(vec) != 3:
        raise ValueError(f"expected 3 components, got {len(vec)}")
    if not all(math.isfinite(x) for x in vec):
        raise ValueError(f"non-finite component in {vec}")
    return vec  # type: ignore[return-value]


@dataclass(frozen=True)
class KinematicState:
    """Position (km) and velocity (km/s) in a shared linearized local frame."""

    position: Vec3
    velocity: Vec3

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "velocity", _vec3(self.velocity))

    def with_velocity_delta(self, delta) -> "KinematicState":
        dv = _vec3(delta)
        return KinematicState(
            self.position, tuple(v + d for v, d in zip(self.velocity, dv))
        )


def check_u64(name: str, value: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise TypeError(f"{name} must be an int, got {type(value).__name__}")
    if not 0 <= value <= U64_MAX:
        raise ValueError(f"{name}={value} outside unsigned 64-bit range")
    return value
