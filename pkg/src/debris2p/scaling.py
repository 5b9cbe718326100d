"""Characteristic scales used to nondimensionalize inputs and outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import ConfigError

STANDARD_GRAVITY = 9.80665


@dataclass(frozen=True)
class ScalingConfig:
    """Horizontal length ``L``, thickness ``H`` (metres) and gravity ``g`` (m/s^2)."""

    L: float = 1.0
    H: float = 1.0
    g: float = STANDARD_GRAVITY

    def __post_init__(self):
        for name in ("L", "H", "g"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"scaling {name} must be positive, got {value!r}")

    @property
    def epsilon(self) -> float:
        return self.H / self.L

    @property
    def t_unit(self) -> float:
        return math.sqrt(self.L / self.g)

    @property
    def v_unit(self) -> float:
        return math.sqrt(self.g * self.L)

    # conversions between physical and scaled variables
    def length(self, x_m):
        return x_m / self.L

    def thickness(self, h_m):
        return h_m / self.H

    def velocity(self, v_ms):
        return v_ms / self.v_unit

    def time(self, t_s):
        return t_s / self.t_unit

    def length_m(self, x):
        return x * self.L

    def thickness_m(self, h):
        return h * self.H

    def velocity_ms(self, v):
        return v * self.v_unit

    def time_s(self, t):
        return t * self.t_unit

    def volume_m3(self, scaled_volume):
        """Scaled ``J h dxi deta`` sums to cubic metres."""
        return scaled_volume * self.H * self.L * self.L
