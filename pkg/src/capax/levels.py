"""Level-set extraction and the monotone level functionals.

Level surfaces {u = t} are recovered by radial root finding along a fixed
icosphere direction set, which is valid inside the detected star-shaped
window and yields spectral-quality surface quadrature: node weights are the
radial-graph surface element r^2 / <omega, nu> times the exact geodesic
direction-cell area.

On these surfaces the module evaluates the level functionals

    U_p(t) = [Cap/t]^((p-1)(n-1)/(n-2)) * int_{u=t} |Du|^p dsigma,

nondecreasing in t, and the substitute-variable functional

    Phi(s) = (1-s^2)^(-(n+2)/2) * int_{f=s} |grad_g f|^3 dsigma_g,

nonincreasing in s = -tanh(log t/(n-2)), both constant exactly on balls.
Phi is evaluated from Euclidean node data through the conformal dictionary
(|grad_g f|, dsigma_g in terms of u, Du); it matches U_3 up to the constant
(n-2)^(-3) Cap^(-2(n-1)/(n-2)), and the pair is kept as two implementations
on purpose: their agreement exercises the whole translation between the two
pictures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conformal import lift_arrays
from .errors import ExtractionError, LevelWindowError
from .fields import evaluate_many
from .geometry import radial_surface, sphere_directions, _angles_of
from .bem import BemSolution
from .util import chunked

__all__ = [
    "LevelSurface",
    "FunctionalCurve",
    "PhiDerivativeIdentity",
    "extract_level",
    "level_window",
    "u_functional",
    "phi_functional",
    "phi_from_u3",
    "phi_derivative_identity",
    "flux_and_volume_curves",
    "curves_to_csv",
    "s_of_t",
    "t_of_s",
]

_SHELL_CLEARANCE = 0.75   # ray brackets start this many local diameters out
_NODE_TOL = 1e-8


_RAY_GRAM_BYTES_MAX = 400 * 1024 * 1024


def _ray_gram(sol: BemSolution, dirs: np.ndarray, direction_level: int):
    """Cached <direction, source> Gram matrix for fast evaluation on rays.

    Stored in single precision: the fast field only locates roots, which are
    re-polished against the fully corrected double-precision evaluator.
    """
    key = ("ray-gram", direction_level)
    cached = sol._cache.get(key)
    if cached is None:
        sflat = sol._src_pts.reshape(-1, 3)
        wflat = (sol._src_wts.reshape(-1)
                 * np.repeat(sol.sigma, sol._src_pts.shape[1])).astype(np.float32)
        s_sq = np.einsum("sx,sx->s", sflat, sflat).astype(np.float32)
        gram = None
        if len(dirs) * len(sflat) * 4 <= _RAY_GRAM_BYTES_MAX:
            gram = (dirs @ sflat.T).astype(np.float32)
        cached = (gram, wflat, s_sq, sflat)
        sol._cache[key] = cached
    return cached


def _ray_eval(sol: BemSolution, dirs: np.ndarray, r: np.ndarray,
              direction_level: int, slope: bool = False,
              subset: np.ndarray | None = None):
    """Fast u (and radial derivative) at points r * dirs[subset].

    Specialization of the layer evaluation to fixed rays: distances come
    from |r w - y|^2 = r^2 - 2 r <w, y> + |y|^2 with a cached direction /
    source Gram matrix, and d u/d r = -sum w_q (r - <w, y_q>) / d^3.  Uses
    the base panel rule only (no near requadrature), which is adequate for
    locating roots; the extracted nodes are re-polished against the fully
    corrected evaluator afterwards.
    """
    gram, wflat, s_sq, sflat = _ray_gram(sol, dirs, direction_level)
    if subset is not None:
        dirs = dirs[subset]
        gram = None if gram is None else gram[subset]
    ndir = len(dirs)
    u = np.empty(ndir)
    dudr = np.empty(ndir) if slope else None
    for blk in chunked(ndir, 1024):
        g = (dirs[blk] @ sflat.T).astype(np.float32) if gram is None else gram[blk]
        rb = r[blk].astype(np.float32)[:, None]
        d2 = rb * rb - 2.0 * rb * g + s_sq[None, :]
        d = np.sqrt(d2)
        inv = wflat[None, :] / d
        u[blk] = inv.sum(axis=1, dtype=np.float64)
        if slope:
            dudr[blk] = -((rb - g) * inv / d2).sum(axis=1, dtype=np.float64)
    return (u, dudr) if slope else u


def s_of_t(t: float, n: int = 3) -> float:
    """Substitute-variable level s = -tanh(log t / (n-2)) of a u-level t."""
    return float(-math.tanh(math.log(t) / (n - 2)))


def t_of_s(s: float, n: int = 3) -> float:
    """u-level of a substitute-variable level: t = ((1-s)/(1+s))^((n-2)/2)."""
    return float(((1.0 - s) / (1.0 + s)) ** ((n - 2) / 2.0))


@dataclass(frozen=True)
class LevelSurface:
    """Quadrature nodes on one level surface {u = t} = {f = s}.

    weights are positive and sum to the Euclidean area; area_g applies the
    conformal surface element (1-s)^(n-1).
    """

    t: float
    s: float
    points: np.ndarray        # (M, 3)
    u: np.ndarray             # (M,)
    du: np.ndarray            # (M, 3)
    d2u: np.ndarray           # (M, 3, 3)
    du_norm: np.ndarray       # (M,)
    weights: np.ndarray       # (M,)
    euclidean_area: float
    area_g: float
    direction_level: int


@dataclass(frozen=True)
class FunctionalCurve:
    """Sampled map parameter -> functional value."""

    param_kind: str           # "t" or "s"
    kind: str                 # "U_p" | "Phi" | "Flux" | "InvGradIntegral" | "AreaEuclidean" | "Volume"
    params: np.ndarray
    values: np.ndarray
    p: float | None = None

    def __post_init__(self):
        d = np.diff(self.params)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("curve parameters must be strictly ordered")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curve values must be finite")


def _direction_data(sol: BemSolution, direction_level: int) -> dict:
    """Per-direction ray data (cached on the solution): surface radius,
    shell clearance, starting bracket and the admissible level window."""
    key = ("ray-data", direction_level)
    if key in sol._cache:
        return sol._cache[key]
    mesh = sol.mesh
    if mesh.domain is None:
        raise ExtractionError("level extraction needs the analytic domain spec")
    dirs, dweights = sphere_directions(direction_level)
    surf = radial_surface(mesh.domain)
    theta, phi = _angles_of(dirs)
    r_surf = surf.r(theta, phi)

    # local panel size: diameter of the panel whose centroid is best aligned
    cen_dirs = mesh.centroids / np.linalg.norm(mesh.centroids, axis=1, keepdims=True)
    align = dirs @ cen_dirs.T
    local_diam = mesh.diameters[np.argmax(align, axis=1)]

    r_lo = r_surf + _SHELL_CLEARANCE * local_diam
    u_lo = _ray_eval(sol, dirs, r_lo, direction_level)

    # monotone single-crossing check along sampled rays out to the far zone
    stride = max(1, len(dirs) // 320)
    subset = np.arange(0, len(dirs), stride)
    r_far = max(4.0 * mesh.circumradius, 2.0 * sol.capacity / 0.05)
    grid = np.geomspace(1.0, r_far / r_lo.min(), 12)
    profile = np.empty((len(subset), len(grid)))
    for k, g in enumerate(grid):
        profile[:, k] = _ray_eval(sol, dirs, r_lo[subset] * g, direction_level,
                                  subset=subset)
    drops = np.diff(profile, axis=1)
    if np.any(drops > 1e-6 * np.abs(profile[:, :-1])):
        raise ExtractionError("potential is not monotone along some sampled ray")

    t_star = 0.995 * float(u_lo.min())
    data = {"dirs": dirs, "dweights": dweights, "r_lo": r_lo,
            "u_lo": u_lo, "t_star": t_star}
    sol._cache[key] = data
    return data


def level_window(sol: BemSolution, direction_level: int = 3) -> float:
    """Largest admissible level t for radial extraction on this solution."""
    return _direction_data(sol, direction_level)["t_star"]


def extract_level(sol: BemSolution, t: float, direction_level: int = 3) -> LevelSurface:
    """Extract the level surface {u = t} by bisection plus Newton polish
    along the direction set.  Raises LevelWindowError when t exceeds the
    detected star-shaped window."""
    if not 0.0 < t < 1.0:
        raise LevelWindowError(f"level t={t} outside (0, 1)")
    cache_key = ("surface", round(float(t), 12), direction_level)
    if cache_key in sol._cache:
        return sol._cache[cache_key]

    data = _direction_data(sol, direction_level)
    if t > data["t_star"]:
        raise LevelWindowError(
            f"level t={t} above the extraction window t*={data['t_star']:.6f} "
            "(surface would enter the near-boundary shell)")

    dirs = data["dirs"]
    ndir = len(dirs)
    lo = data["r_lo"].copy()
    hi = np.full(ndir, max(2.0 * sol.mesh.circumradius,
                           1.5 * (sol.capacity / t) ** (1.0 / (sol.n - 2))))
    for _ in range(60):
        u_hi = _ray_eval(sol, dirs, hi, direction_level)
        still = u_hi >= t
        if not np.any(still):
            break
        hi[still] *= 2.0
    else:
        raise ExtractionError(f"failed to bracket level t={t}")

    # safeguarded Newton on the fast ray field (single-precision noise floor)
    r = np.clip(np.full(ndir, (sol.capacity / t) ** (1.0 / (sol.n - 2))), lo, hi)
    fast_tol = max(1e-12, 5e-7 * t)
    converged = False
    for _ in range(40):
        u, dudr = _ray_eval(sol, dirs, r, direction_level, slope=True)
        np.maximum(lo, np.where(u > t, r, lo), out=lo)
        np.minimum(hi, np.where(u < t, r, hi), out=hi)
        if np.abs(u - t).max() < fast_tol:
            converged = True
            break
        step = np.where(dudr != 0.0, (u - t) / dudr, 0.0)
        r_new = r - step
        bad = ~np.isfinite(r_new) | (r_new <= lo) | (r_new >= hi)
        r_new[bad] = 0.5 * (lo[bad] + hi[bad])
        r = r_new
    if not converged:
        raise ExtractionError(f"ray Newton failed to converge at level t={t}")

    # polish against the fully corrected evaluator (the fast ray field skips
    # near-panel requadrature, so its root is offset by the correction size);
    # unclamped Newton is safe this close to a simple root
    for _ in range(4):
        pts = r[:, None] * dirs
        u, du, _ = evaluate_many(sol, pts, order=1, enforce_contract=False)
        if np.abs(u - t).max() <= 1e-12:
            break
        slope = np.einsum("mi,mi->m", du, dirs)
        step = np.where(slope != 0.0, (u - t) / slope, 0.0)
        r = np.maximum(r - step, 0.5 * data["r_lo"])

    pts = r[:, None] * dirs
    u, du, d2u = evaluate_many(sol, pts, order=2, enforce_contract=False)
    if np.abs(u - t).max() > _NODE_TOL:
        raise ExtractionError(
            f"root polish left |u - t| = {np.abs(u - t).max():.2e} > {_NODE_TOL}")

    du_norm = np.linalg.norm(du, axis=1)
    if np.any(du_norm == 0.0):
        raise ExtractionError("critical point on extracted level surface")
    nu = -du / du_norm[:, None]
    cos_alpha = np.einsum("mi,mi->m", dirs, nu)
    if np.any(cos_alpha <= 0.0):
        raise ExtractionError(
            "level surface is not a radial graph over the direction set")
    weights = r * r * data["dweights"] / cos_alpha
    area = float(weights.sum())
    s = s_of_t(t, sol.n)
    surface = LevelSurface(
        t=float(t), s=s, points=pts, u=u, du=du, d2u=d2u, du_norm=du_norm,
        weights=weights, euclidean_area=area,
        area_g=float((1.0 - s) ** (sol.n - 1) * area),
        direction_level=direction_level)
    sol._cache[cache_key] = surface
    return surface


def u_functional(sol: BemSolution, t: float, p: float,
                 direction_level: int = 3) -> float:
    """U_p(t): capacity-normalized p-th gradient moment of the level t."""
    surf = extract_level(sol, t, direction_level)
    n = sol.n
    factor = (sol.capacity / t) ** ((p - 1.0) * (n - 1.0) / (n - 2.0))
    return float(factor * np.sum(surf.du_norm ** p * surf.weights))


def phi_functional(sol: BemSolution, s: float, direction_level: int = 3) -> float:
    """Phi(s) evaluated from Euclidean node data on {f = s}.

    |grad_g f|^2 = (1-s^2) P with P = u^(-2(n-1)/(n-2)) |Du/(n-2)|^2 and
    dsigma_g = (1-s)^(n-1) dsigma collapse the conformal integral to a plain
    weighted |Du|^3 integral.
    """
    if not 0.0 <= s < 1.0:
        raise LevelWindowError(f"substitute level s={s} outside [0, 1)")
    n = sol.n
    t = t_of_s(s, n)
    surf = extract_level(sol, t, direction_level)
    pref = ((1.0 - s * s) ** (-(n - 1.0) / 2.0)
            * (1.0 - s) ** (n - 1.0)
            * t ** (-3.0 * (n - 1.0) / (n - 2.0))
            / (n - 2.0) ** 3)
    return float(pref * np.sum(surf.du_norm ** 3 * surf.weights))


def phi_from_u3(sol: BemSolution, s: float, direction_level: int = 3) -> float:
    """Phi via the U_3 route: Phi = (n-2)^(-3) Cap^(-2(n-1)/(n-2)) U_3(t(s))."""
    n = sol.n
    u3 = u_functional(sol, t_of_s(s, n), 3.0, direction_level)
    return float(u3 / (n - 2) ** 3 * sol.capacity ** (-2.0 * (n - 1) / (n - 2)))


@dataclass(frozen=True)
class PhiDerivativeIdentity:
    """Both sides of the derivative identity
    (1-s^2)^((n+2)/2) Phi'(s) = -2 [ int |grad_g f|^2 H_g dsigma_g
    + (n-1) s/(1-s^2) int |grad_g f|^3 dsigma_g ], which are nonpositive,
    plus the equivalent u-side integrand sign check
    int |Du|^2 [H/(n-1) - |Du|/((n-2)u)] dsigma >= 0."""

    s: float
    ds: float
    lhs: float
    rhs: float
    residual: float
    u_form_integral: float


def phi_derivative_identity(sol: BemSolution, s: float, ds: float,
                            direction_level: int = 3) -> PhiDerivativeIdentity:
    """Central-difference derivative of Phi against the surface-integral form."""
    n = sol.n
    if not (0.0 <= s - ds and s + ds < 1.0):
        raise LevelWindowError("stencil levels leave [0, 1)")
    phi_plus = phi_functional(sol, s + ds, direction_level)
    phi_minus = phi_functional(sol, s - ds, direction_level)
    lhs = (1.0 - s * s) ** ((n + 2.0) / 2.0) * (phi_plus - phi_minus) / (2.0 * ds)

    surf = extract_level(sol, t_of_s(s, n), direction_level)
    out = lift_arrays(surf.u, surf.du, surf.d2u, n)
    omf = 1.0 - out["f"]
    grad_g = np.sqrt(out["grad_g_sq"])
    quad = np.einsum("mi,mij,mj->m", out["df"], out["hess_g"], out["df"])
    h_g = out["lap_g_formula"] / grad_g - quad / (omf ** 4 * grad_g ** 3)
    w_g = (1.0 - s) ** (n - 1) * surf.weights
    int_h = float(np.sum(out["grad_g_sq"] * h_g * w_g))
    int_cube = float(np.sum(grad_g ** 3 * w_g))
    rhs = -2.0 * (int_h + (n - 1.0) * s / (1.0 - s * s) * int_cube)

    h_e = np.einsum("mi,mij,mj->m", surf.du, surf.d2u, surf.du) / surf.du_norm ** 3
    u_form = float(np.sum(surf.du_norm ** 2
                          * (h_e / (n - 1.0) - surf.du_norm / ((n - 2.0) * surf.u))
                          * surf.weights))
    residual = abs(lhs - rhs) / (abs(rhs) + 1e-300)
    return PhiDerivativeIdentity(s=float(s), ds=float(ds), lhs=float(lhs),
                                 rhs=float(rhs), residual=float(residual),
                                 u_form_integral=u_form)


def flux_and_volume_curves(sol: BemSolution, t_grid,
                           direction_level: int = 3) -> dict[str, FunctionalCurve]:
    """Flux, inverse-gradient integral, area and enclosed volume per level.

    The flux int |Du| dsigma is level-independent for a harmonic potential
    (equal to (n-2)|S^(n-1)| Cap).  Volumes |Omega_t| accumulate the coarea
    element int 1/|Du| downward from the largest grid level, whose volume is
    measured directly with the divergence theorem; levels closer to the
    boundary than the extraction window are not integrated over.
    """
    t_grid = np.sort(np.unique(np.asarray(t_grid, dtype=float)))
    if len(t_grid) == 0:
        raise LevelWindowError("empty level grid")
    surfaces = [extract_level(sol, t, direction_level) for t in t_grid]
    flux = np.array([float(np.sum(s.du_norm * s.weights)) for s in surfaces])
    invgrad = np.array([float(np.sum(s.weights / s.du_norm)) for s in surfaces])
    areas = np.array([s.euclidean_area for s in surfaces])

    top = surfaces[-1]
    nu = -top.du / top.du_norm[:, None]
    vol_top = float(np.einsum("mi,mi->m", top.points, nu) @ top.weights / 3.0)
    volumes = np.empty_like(t_grid)
    volumes[-1] = vol_top
    gl_x, gl_w = np.polynomial.legendre.leggauss(4)
    for k in range(len(t_grid) - 2, -1, -1):
        t0, t1 = t_grid[k], t_grid[k + 1]
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        acc = 0.0
        for xq, wq in zip(gl_x, gl_w):
            shell = extract_level(sol, mid + half * xq, direction_level)
            acc += wq * float(np.sum(shell.weights / shell.du_norm))
        volumes[k] = volumes[k + 1] + half * acc

    return {
        "Flux": FunctionalCurve("t", "Flux", t_grid, flux),
        "InvGradIntegral": FunctionalCurve("t", "InvGradIntegral", t_grid, invgrad),
        "AreaEuclidean": FunctionalCurve("t", "AreaEuclidean", t_grid, areas),
        "Volume": FunctionalCurve("t", "Volume", t_grid, volumes),
    }


def curves_to_csv(curves) -> str:
    """Serialize curves as CSV rows `param,kind,p,value` (17 significant
    digits, one row per sample)."""
    lines = ["param,kind,p,value"]
    for curve in curves:
        ptxt = "" if curve.p is None else f"{curve.p:.17g}"
        for x, v in zip(curve.params, curve.values):
            lines.append(f"{x:.17g},{curve.kind},{ptxt},{v:.17g}")
    return "\n".join(lines) + "\n"
