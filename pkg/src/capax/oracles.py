"""Closed-form ground truth: ball potentials in any dimension, ellipsoid
capacity by elliptic integral, ellipsoid curvature extremes.

Nothing in this module touches the boundary-integral pipeline, so its values
stay independent of the code they are used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import OutOfContractError

__all__ = [
    "BallField",
    "ball_field",
    "ellipsoid_capacity",
    "prolate_spheroid_capacity",
    "ellipsoid_curvature_extremes",
    "ellipsoid_mean_curvature",
]


@dataclass(frozen=True)
class BallField:
    """Exact exterior potential of a centered ball of given radius in R^n.

    u(x) = rho^(n-2) |x|^(2-n), so the capacity is rho^(n-2) and the
    gradient/Hessian are available in closed form at any exterior point.
    """

    radius: float
    n: int = 3

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        if self.n < 3:
            raise ValueError("dimension must be >= 3")

    @property
    def capacity(self) -> float:
        return self.radius ** (self.n - 2)

    def evaluate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Evaluate (u, Du, D2u) at exterior points of shape (M, n).

        Raises OutOfContractError for points strictly inside the ball.
        """
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[1] != self.n:
            raise ValueError(f"points must have {self.n} components, got {x.shape[1]}")
        r = np.linalg.norm(x, axis=1)
        if np.any(r < self.radius * (1.0 - 1e-12)):
            raise OutOfContractError("ball field evaluated at an interior point")
        n, cap = self.n, self.capacity
        u = cap * r ** (2 - n)
        du = (2 - n) * cap * r[:, None] ** (-n) * x
        eye = np.eye(n)
        d2u = (n - 2) * cap * (
            n * x[:, :, None] * x[:, None, :] * r[:, None, None] ** (-n - 2)
            - eye[None, :, :] * r[:, None, None] ** (-n)
        )
        return u, du, d2u


def ball_field(rho: float, n: int, x) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact (u, Du, D2u) of the ball potential at a single point x."""
    fld = BallField(rho, n)
    u, du, d2u = fld.evaluate(np.asarray(x, dtype=float)[None, :])
    return float(u[0]), du[0], d2u[0]


def ellipsoid_capacity(a: float, b: float, c: float) -> float:
    """Capacity of the solid ellipsoid with semi-axes (a, b, c) in R^3.

    Evaluates 2 / I with I = int_0^inf dxi / sqrt((a^2+xi)(b^2+xi)(c^2+xi))
    by adaptive quadrature after the substitution xi = m * tan(theta)^2,
    which maps the half line onto (0, pi/2) and removes the algebraic decay.
    Normalized so that a sphere of radius r has capacity r.
    """
    if min(a, b, c) <= 0:
        raise ValueError("semi-axes must be positive")
    m = (a * b * c) ** (2.0 / 3.0)

    def integrand(theta):
        t2 = math.tan(theta) ** 2
        xi = m * t2
        jac = 2.0 * m * math.tan(theta) / math.cos(theta) ** 2
        return jac / math.sqrt((a * a + xi) * (b * b + xi) * (c * c + xi))

    val, err = integrate.quad(integrand, 0.0, math.pi / 2.0,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    if not math.isfinite(val) or val <= 0:
        raise ArithmeticError("ellipsoid capacity integral failed to converge")
    return 2.0 / val


def prolate_spheroid_capacity(a: float, b: float) -> float:
    """Closed-form capacity of the prolate spheroid with axes (a, b, b), a > b.

    Independent cross-check for the quadrature route:
    2*sqrt(a^2-b^2) / log((a + sqrt(a^2-b^2)) / (a - sqrt(a^2-b^2))).
    """
    if not a > b > 0:
        raise ValueError("prolate spheroid requires a > b > 0")
    e = math.sqrt(a * a - b * b)
    return 2.0 * e / math.log((a + e) / (a - e))


def ellipsoid_mean_curvature(a: float, b: float, c: float,
                             theta, phi) -> np.ndarray:
    """Sum-of-principal-curvatures H of the ellipsoid at spherical parameters.

    Uses the implicit-surface divergence formula on F = x^2/a^2 + ... - 1
    (outward normal, so a sphere of radius r gives +2/r), which is a route
    independent of any parametric fundamental-form computation.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st, ct = np.sin(theta), np.cos(theta)
    x = a * st * np.cos(phi)
    y = b * st * np.sin(phi)
    z = c * ct
    gx, gy, gz = 2 * x / a**2, 2 * y / b**2, 2 * z / c**2
    g2 = gx * gx + gy * gy + gz * gz
    lap = 2.0 / a**2 + 2.0 / b**2 + 2.0 / c**2
    # grad^T Hess grad with Hess = diag(2/a^2, 2/b^2, 2/c^2)
    ghg = 2 * gx * gx / a**2 + 2 * gy * gy / b**2 + 2 * gz * gz / c**2
    return (lap * g2 - ghg) / g2 ** 1.5


def ellipsoid_curvature_extremes(a: float, b: float, c: float,
                                 sweep: int = 200) -> tuple[float, float]:
    """(max H, min H) over the ellipsoid boundary, a >= b >= c > 0.

    Dense (theta, phi) sweep of the implicit-formula curvature followed by
    local refinement around the best grid points.
    """
    if not (a >= b >= c > 0):
        raise ValueError("expected a >= b >= c > 0")
    theta = np.linspace(1e-3, math.pi - 1e-3, sweep)
    phi = np.linspace(0.0, 2.0 * math.pi, 2 * sweep, endpoint=False)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    h = ellipsoid_mean_curvature(a, b, c, tt, pp)
    # Poles are excluded from the linspace; cover them explicitly.
    h_pole = float(ellipsoid_mean_curvature(a, b, c, 0.0, 0.0))
    candidates = [(h_pole, (0.0, 0.0))]
    i_max = np.unravel_index(np.argmax(h), h.shape)
    i_min = np.unravel_index(np.argmin(h), h.shape)
    candidates.append((float(h[i_max]), (tt[i_max], pp[i_max])))
    candidates.append((float(h[i_min]), (tt[i_min], pp[i_min])))

    def refine(t0, p0, sign):
        res = optimize.minimize(
            lambda v: sign * float(ellipsoid_mean_curvature(a, b, c, v[0], v[1])),
            x0=np.array([t0, p0]), method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 500})
        return sign * res.fun

    h_max = max(refine(t0, p0, -1.0) for _, (t0, p0) in candidates)
    h_min = min(refine(t0, p0, +1.0) for _, (t0, p0) in candidates)
    return float(h_max), float(h_min)
