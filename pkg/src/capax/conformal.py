"""Conformal calculus on exterior potentials.

From pointwise (u, Du, D2u) data this module builds the substitute variable
f = -tanh(log u / (n-2)) and the metric g = (1-f)^2 g_flat, and evaluates in
the flat chart: the g-Hessian and g-Laplacian of f (by two independent
routes), the squared g-gradient, the quotient P = |grad_g f|^2 / (1 - f^2)
(equal to u^(-2(n-1)/(n-2)) |Du/(n-2)|^2, constant exactly on round balls),
the scalar curvature R = n(n-1) P, the flow field X = (1+f)^(2-n) grad_g P,
and the closed form of its g-divergence

    div_g X = 2 / ((1-f)(1+f)^(n-1)) * (|Hess_g f|_g^2 - (Lap_g f)^2 / n),

which is nonnegative and vanishes exactly where Hess_g f is proportional
to g (the round case).  All formulas keep the dimension n as a runtime
parameter.

The gradient of P needs nothing beyond second derivatives of u, since P is a
pointwise function of (u, Du) only; differencing the evaluated X field is
still a genuinely independent route to div_g X because the finite
differences probe third derivatives of u implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import CriticalPointError
from .fields import FieldSample

__all__ = [
    "ConformalSample",
    "lift",
    "lift_arrays",
    "laplacian_consistency",
    "ricci_identity_residual",
    "level_mean_curvature_g",
    "div_x_two_routes",
    "DivXRoutes",
    "traceless_hessian_residual",
]


def lift_arrays(u: np.ndarray, du: np.ndarray, d2u: np.ndarray, n: int) -> dict:
    """Vectorized conformal lift of batched field data.

    u: (M,), du: (M, n), d2u: (M, n, n).  Returns a dict of arrays; see
    module docstring for the quantities.  Requires 0 < u < 1.
    """
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    d2u = np.asarray(d2u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("conformal lift requires 0 < u < 1 (exterior point)")

    f = -np.tanh(np.log(u) / (n - 2))
    omf = 1.0 - f
    opf = 1.0 + f
    omf2 = 1.0 - f * f

    scale = omf2 / ((n - 2) * u)                       # (1-f^2)/((n-2) u)
    df = -scale[:, None] * du
    df_sq = np.einsum("mi,mi->m", df, df)
    du_sq = np.einsum("mi,mi->m", du, du)

    c1 = 0.5 * n / opf + 0.5 * (n - 4) / omf
    d2f = c1[:, None, None] * df[:, :, None] * df[:, None, :] \
        - scale[:, None, None] * d2u

    eye = np.eye(n)
    hess_g = (n / omf2)[:, None, None] * df[:, :, None] * df[:, None, :] \
        - (df_sq / omf)[:, None, None] * eye[None] \
        - scale[:, None, None] * d2u

    grad_g_sq = df_sq / omf ** 2
    p_f = grad_g_sq / omf2
    p_u = u ** (-2.0 * (n - 1) / (n - 2)) * du_sq / (n - 2) ** 2

    lap_g_formula = -n * f * p_f
    lap_g_trace = np.einsum("mii->m", hess_g) / omf ** 2

    hess_g_sq = np.einsum("mij,mij->m", hess_g, hess_g) / omf ** 4
    div_x_closed = 2.0 / (omf * opf ** (n - 1)) \
        * (hess_g_sq - lap_g_trace ** 2 / n)

    # Euclidean gradient of P = alpha(u) |Du/(n-2)|^2, alpha = u^(-2(n-1)/(n-2))
    alpha = u ** (-2.0 * (n - 1) / (n - 2))
    dalpha = -2.0 * (n - 1) / (n - 2) * alpha / u
    dp = (dalpha * du_sq / (n - 2) ** 2)[:, None] * du \
        + (2.0 * alpha / (n - 2) ** 2)[:, None] * np.einsum("mij,mj->mi", d2u, du)
    x_field = (opf ** (2 - n) / omf ** 2)[:, None] * dp

    return {
        "f": f, "df": df, "d2f": d2f, "hess_g": hess_g,
        "grad_g_sq": grad_g_sq, "p": p_f, "p_u": p_u,
        "lap_g_formula": lap_g_formula, "lap_g_trace": lap_g_trace,
        "scalar_r": n * (n - 1) * p_f,
        "dp": dp, "x": x_field, "div_x_closed": div_x_closed,
    }


@dataclass(frozen=True)
class ConformalSample:
    """Conformal data lifted from one field sample.

    Tensor entries are components in the flat chart; `nabla2_f` is the
    g-Hessian of f (a covariant 2-tensor), `x` the chart components of the
    index-raised flow field.
    """

    base: FieldSample
    f: float
    grad_f: np.ndarray
    hess_f: np.ndarray
    nabla2_f: np.ndarray
    laplacian_g_formula: float
    laplacian_g_trace: float
    norm_grad_f_g_sq: float
    p: float
    p_from_u: float
    scalar_r: float
    x: np.ndarray
    div_x_closed: float


def lift(sample: FieldSample) -> ConformalSample:
    """Conformal lift of a single field sample."""
    out = lift_arrays(np.array([sample.u]), sample.du[None, :],
                      sample.d2u[None, :, :], sample.n)
    return ConformalSample(
        base=sample, f=float(out["f"][0]), grad_f=out["df"][0],
        hess_f=out["d2f"][0], nabla2_f=out["hess_g"][0],
        laplacian_g_formula=float(out["lap_g_formula"][0]),
        laplacian_g_trace=float(out["lap_g_trace"][0]),
        norm_grad_f_g_sq=float(out["grad_g_sq"][0]),
        p=float(out["p"][0]), p_from_u=float(out["p_u"][0]),
        scalar_r=float(out["scalar_r"][0]), x=out["x"][0],
        div_x_closed=float(out["div_x_closed"][0]))


def laplacian_consistency(cs: ConformalSample) -> float:
    """Relative gap between the two g-Laplacian routes: the first-order
    formula -n f P against the g-trace of the computed g-Hessian."""
    denom = abs(cs.laplacian_g_formula) + 1e-300
    return abs(cs.laplacian_g_trace - cs.laplacian_g_formula) / denom


def ricci_identity_residual(cs: ConformalSample) -> float:
    """Max-entry relative residual of the Ricci identity of the metric.

    Computes Ric(g) from the conformal-change formula with log factor
    phi = log(1-f) and compares with
    (n-2)/(1-f) Hess_g f + (n-1-f)/(1-f) P g, which is the flatness of the
    background metric in disguise; both sides are exact for true potentials.
    """
    n = cs.base.n
    f, df, d2f = cs.f, cs.grad_f, cs.hess_f
    omf = 1.0 - f
    eye = np.eye(n)
    dphi = -df / omf
    d2phi = -d2f / omf - np.outer(df, df) / omf ** 2
    lap_phi = np.trace(d2phi)
    dphi_sq = float(dphi @ dphi)
    ric = -(n - 2) * (d2phi - np.outer(dphi, dphi)) \
        + (-lap_phi - (n - 2) * dphi_sq) * eye
    rhs = (n - 2) / omf * cs.nabla2_f \
        + (n - 1.0 - f) / omf * cs.p * omf ** 2 * eye
    scale = np.abs(ric).max() + 1e-300
    return float(np.abs(ric - rhs).max() / scale)


def level_mean_curvature_g(cs: ConformalSample) -> tuple[float, float]:
    """Mean curvature of the level set through the sample point.

    Returns (H_g, H_euclid): H_g with respect to g and the normal pointing
    toward larger f, via Lap_g f / |grad f|_g - Hess_g f(grad f, grad f) /
    |grad f|_g^3; H_euclid with respect to the flat metric and the outward
    normal -Du/|Du|, via D2u(Du, Du) / |Du|^3 (harmonicity of u).
    """
    df_norm = float(np.linalg.norm(cs.grad_f))
    du = cs.base.du
    du_norm = float(np.linalg.norm(du))
    if df_norm == 0.0 or du_norm == 0.0:
        raise CriticalPointError("level-set normal undefined at a critical point")
    omf = 1.0 - cs.f
    quad = float(cs.grad_f @ cs.nabla2_f @ cs.grad_f)
    h_g = cs.laplacian_g_formula / (df_norm / omf) - quad / (omf * df_norm ** 3)
    h_e = float(du @ cs.base.d2u @ du) / du_norm ** 3
    return h_g, h_e


class DivXRoutes(NamedTuple):
    """Two routes to div_g X plus the equivalent elliptic-operator form."""
    fd: float
    closed: float
    elliptic_form: float


def div_x_two_routes(field: Callable, x: np.ndarray, h: float,
                     n: int = 3) -> DivXRoutes:
    """div_g X at x by central differences of the evaluated X field and by
    the closed Hessian form.

    field maps points (M, n) to (u, Du, D2u).  The divergence carries the
    metric volume weight: div_g X = (1-f)^(-n) d_i((1-f)^n X^i).  The
    stencil needs clearance 6 h inside the field's accuracy region; the
    elliptic_form entry is n(n-1)(1+f)^(n-2) times the closed route, the
    drift-diffusion operator applied to the scalar curvature.
    """
    x = np.asarray(x, dtype=float).reshape(n)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    pts = [x]
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        pts.extend([x + e, x - e])
    pts = np.array(pts)
    u, du, d2u = field(pts)
    out = lift_arrays(u, du, d2u, n)
    f0 = out["f"][0]
    weight = (1.0 - out["f"]) ** n
    flux = weight[:, None] * out["x"]
    acc = 0.0
    for i in range(n):
        acc += (flux[1 + 2 * i, i] - flux[2 + 2 * i, i]) / (2.0 * h)
    fd = acc / (1.0 - f0) ** n
    closed = float(out["div_x_closed"][0])
    elliptic = n * (n - 1) * (1.0 + f0) ** (n - 2) * closed
    return DivXRoutes(fd=float(fd), closed=closed, elliptic_form=float(elliptic))


def traceless_hessian_residual(cs: ConformalSample) -> float:
    """Largest entry of the trace-free part of Hess_g f in g-orthonormal
    frames; the proportionality Hess_g f = lambda g (round case) makes it
    vanish."""
    n = cs.base.n
    frame = cs.nabla2_f / (1.0 - cs.f) ** 2
    frame = frame - (np.trace(frame) / n) * np.eye(n)
    return float(np.abs(frame).max())
