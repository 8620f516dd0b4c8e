"""Coordinate arithmetic, distances, and delay-grid quantization.

All distances are in meters, delays in OFDM sample periods. The delay grid
is defined by the number of subcarriers N and the subcarrier spacing, whose
product is the occupied bandwidth: one sample period spans c0 / (N * df)
meters of path length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 299_792_458.0

Point = tuple[float, float]


@dataclass(frozen=True)
class GridConfig:
    """Delay/range quantization grid of the OFDM system."""

    n_subcarriers: int
    subcarrier_spacing: float
    # 3e8 matches the rounded constants used in common link-budget arithmetic;
    # the exact value is the default.
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self) -> None:
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier_spacing must be positive")
        if self.speed_of_light <= 0:
            raise ValueError("speed_of_light must be positive")

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.subcarrier_spacing


def direct_distance(a: Point, b: Point) -> float:
    """Euclidean distance between two 2D points."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


def sum_distance(bs_u: Point, bs_m: Point, target: Point) -> float:
    """Total path length BS u -> target -> BS m."""
    return direct_distance(bs_u, target) + direct_distance(bs_m, target)


def delay_in_samples(distance: float, grid: GridConfig) -> int:
    """Propagation delay of a path, floored to whole sample periods."""
    if distance < 0:
        raise ValueError("distance must be non-negative")
    return int(math.floor(grid.bandwidth * distance / grid.speed_of_light))


def range_quantum(grid: GridConfig) -> float:
    """Path length spanned by one sample period, c0 / (N * df)."""
    return grid.speed_of_light / grid.bandwidth


def half_quantum(grid: GridConfig) -> float:
    """Worst-case range quantization error (half the quantum)."""
    return 0.5 * range_quantum(grid)


def range_from_delay(delay: int, grid: GridConfig) -> float:
    """Bin-centered range estimate for a delay of `delay` sample periods."""
    q = range_quantum(grid)
    return delay * q + 0.5 * q
