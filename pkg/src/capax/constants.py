"""Dimension-generic sphere/ball measure constants."""

import math


def unit_sphere_area(n: int) -> float:
    """Surface measure of the unit (n-1)-sphere in R^n, e.g. 4*pi for n=3."""
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def unit_ball_volume(n: int) -> float:
    """Lebesgue volume of the unit ball in R^n, e.g. 4*pi/3 for n=3."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)
