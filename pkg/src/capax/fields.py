"""Exterior field evaluation from a solved single layer.

u, Du and D2u at exterior points come from analytic differentiation of the
kernel |x - y|^(-1) under the panel quadratures.  The Hessian kernel is
exactly trace-free, so harmonicity of the evaluated field holds to rounding
regardless of quadrature resolution.

Accuracy contract: points must be strictly exterior and at least half a
local panel diameter away from the boundary; inside that shell the single
layer loses digits and evaluation refuses to run rather than return silently
inaccurate values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bem import BemSolution, triangle_rule
from .errors import OutOfContractError
from .geometry import radial_surface, sphere_directions, _angles_of
from .util import chunked, run_blocks

__all__ = ["FieldSample", "evaluate", "evaluate_many", "asymptotics_check",
           "AsymptoticsRow", "bem_evaluator"]

_SHELL_FACTOR = 0.5          # contract: distance >= 0.5 * local panel diameter
_NEAR_EVAL_FACTOR = 2.0      # requadrature window for evaluation
_NEAR_EVAL_SUBDIV = 2


@dataclass(frozen=True)
class FieldSample:
    """Potential data at one exterior point.

    u lies strictly in (0, 1); D2u is symmetric with tiny trace
    (the kernel is harmonic); distance_to_boundary is measured to the
    nearest panel surface point.
    """

    x: np.ndarray
    u: float
    du: np.ndarray
    d2u: np.ndarray
    n: int
    distance_to_boundary: float


def _interior_mask(sol: BemSolution, pts: np.ndarray) -> np.ndarray:
    mesh = sol.mesh
    if mesh.domain is not None:
        surf = radial_surface(mesh.domain)
        r = np.linalg.norm(pts, axis=1)
        safe = np.where(r > 0, r, 1.0)
        dirs = pts / safe[:, None]
        theta, phi = _angles_of(dirs)
        return r < surf.r(theta, phi) * (1.0 - 1e-12)
    # translated/imported meshes: half-space test against the nearest panel
    d = pts[:, None, :] - mesh.surface_points[None, :, :]
    idx = np.argmin(np.einsum("mfx,mfx->mf", d, d), axis=1)
    gap = pts - mesh.surface_points[idx]
    return np.einsum("mx,mx->m", gap, mesh.normals[idx]) < 0


def _boundary_distance(sol: BemSolution, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(distance to nearest surface point, local panel diameter) per point."""
    mesh = sol.mesh
    sp = mesh.surface_points
    d2 = (pts * pts).sum(axis=1)[:, None] - 2.0 * pts @ sp.T \
        + (sp * sp).sum(axis=1)[None, :]
    idx = np.argmin(d2, axis=1)
    dist = np.sqrt(np.maximum(d2[np.arange(len(pts)), idx], 0.0))
    return dist, mesh.diameters[idx]


def _source_arrays(sol: BemSolution):
    """Flattened, density-weighted panel sources (cached on the solution)."""
    cached = sol._cache.get("source-arrays")
    if cached is None:
        sflat = np.ascontiguousarray(sol._src_pts.reshape(-1, 3))
        wflat = sol._src_wts.reshape(-1) * np.repeat(sol.sigma, sol._src_pts.shape[1])
        s_sq = np.einsum("sx,sx->s", sflat, sflat)
        s_outer = np.ascontiguousarray(
            (sflat[:, :, None] * sflat[:, None, :]).reshape(-1, 9))
        cached = (sflat, wflat, s_sq, s_outer)
        sol._cache["source-arrays"] = cached
    return cached


def evaluate_many(sol: BemSolution, points: np.ndarray, order: int = 2,
                  enforce_contract: bool = True,
                  batch_consistent_rules: bool = False,
                  ) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Evaluate (u, Du, D2u) at many exterior points.

    order 0 evaluates u only, 1 adds the gradient, 2 adds the Hessian.
    With batch_consistent_rules the near-panel requadrature set is chosen
    from the closest approach over the whole batch, so tightly clustered
    batches (finite-difference stencils) see one fixed quadrature rule and
    the evaluated field stays smooth across the stencil.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 3:
        raise ValueError("evaluation points must be 3-vectors")
    mesh = sol.mesh

    dist, local_diam = _boundary_distance(sol, pts)
    if enforce_contract:
        inside = _interior_mask(sol, pts)
        if np.any(inside):
            bad = pts[np.argmax(inside)]
            raise OutOfContractError(f"point {bad} is inside the domain")
        shell = dist < _SHELL_FACTOR * local_diam
        if np.any(shell):
            bad = int(np.argmax(shell))
            raise OutOfContractError(
                f"point {pts[bad]} is {dist[bad]:.3e} from the boundary, "
                f"inside the exclusion shell {_SHELL_FACTOR * local_diam[bad]:.3e}")

    sflat, wflat, s_sq, s_outer = _source_arrays(sol)
    m = len(pts)

    u = np.zeros(m)
    du = np.zeros((m, 3)) if order >= 1 else None
    d2u = np.zeros((m, 3, 3)) if order >= 2 else None
    eye = np.eye(3)

    # All kernel moments reduce to matrix products against the source
    # points/outer products, so no (points x sources x 3) tensors are formed:
    #   Du   = -x sum(w/d^3) + (w/d^3) Y
    #   D2u  = 3 [x x^T sum(w/d^5) - x (w/d^5 Y)^T - (w/d^5 Y) x^T + w/d^5 YY]
    #          - sum(w/d^3) I
    def eval_block(rows: slice):
        x = pts[rows]
        d2 = x @ sflat.T
        d2 *= -2.0
        d2 += s_sq[None, :]
        d2 += (x * x).sum(axis=1)[:, None]
        d = np.sqrt(d2)
        k = wflat[None, :] / d              # w / d
        u[rows] = k.sum(axis=1)
        if order >= 1:
            k /= d2                         # w / d^3
            a_sum = k.sum(axis=1)
            du[rows] = k @ sflat - a_sum[:, None] * x
        if order >= 2:
            k /= d2                         # w / d^5
            b_sum = k.sum(axis=1)
            b_y = k @ sflat                 # (B, 3)
            b_yy = (k @ s_outer).reshape(-1, 3, 3)
            hess = 3.0 * (
                b_sum[:, None, None] * x[:, :, None] * x[:, None, :]
                - x[:, :, None] * b_y[:, None, :]
                - b_y[:, :, None] * x[:, None, :]
                + b_yy)
            hess -= a_sum[:, None, None] * eye[None]
            d2u[rows] = hess

    run_blocks(eval_block, chunked(m, 256))

    # near-panel requadrature: subtract the base-rule contribution of close
    # panels and add back a subdivided one
    cen = mesh.centroids
    d2c = (pts * pts).sum(axis=1)[:, None] - 2.0 * pts @ cen.T \
        + (cen * cen).sum(axis=1)[None, :]
    near = np.sqrt(np.maximum(d2c, 0.0)) < _NEAR_EVAL_FACTOR * mesh.diameters[None, :]
    if batch_consistent_rules and m > 1:
        near[:] = np.any(near, axis=0)[None, :]
    mm, jj = np.nonzero(near)
    if len(mm):
        bary_f, w_f = triangle_rule(5, _NEAR_EVAL_SUBDIV)
        bary_c, w_c = triangle_rule(5, 0)
        tri_all = mesh.vertices[mesh.panels]
        eye = np.eye(3)
        for chunk in chunked(len(mm), 2048):
            pm, pj = mm[chunk], jj[chunk]
            x = pts[pm]
            for bary, w, sign in ((bary_c, w_c, -1.0), (bary_f, w_f, +1.0)):
                qp = np.einsum("kb,pbx->pkx", bary, tri_all[pj])
                wq = sign * w[None, :] * (mesh.areas[pj] * sol.sigma[pj])[:, None]
                diff = x[:, None, :] - qp
                r2 = np.einsum("pkx,pkx->pk", diff, diff)
                r = np.sqrt(r2)
                inv_r = wq / r
                u += np.bincount(pm, weights=inv_r.sum(axis=1), minlength=m)
                if order >= 1:
                    g = inv_r / r2
                    vec = -np.einsum("pk,pkx->px", g, diff)
                    for ax in range(3):
                        du[:, ax] += np.bincount(pm, weights=vec[:, ax], minlength=m)
                if order >= 2:
                    h = inv_r / (r2 * r2)
                    contrib = 3.0 * np.einsum("pk,pkx,pky->pxy", h, diff, diff)
                    contrib -= np.einsum("pk,pk->p", h, r2)[:, None, None] * eye
                    for ax in range(3):
                        for ay in range(3):
                            d2u[:, ax, ay] += np.bincount(
                                pm, weights=contrib[:, ax, ay], minlength=m)

    return u, du, d2u


def evaluate(sol: BemSolution, x) -> FieldSample:
    """Evaluate the potential, gradient and Hessian at one exterior point."""
    pt = np.asarray(x, dtype=float).reshape(1, 3)
    u, du, d2u = evaluate_many(sol, pt, order=2)
    dist, _ = _boundary_distance(sol, pt)
    return FieldSample(x=pt[0], u=float(u[0]), du=du[0], d2u=d2u[0],
                       n=sol.n, distance_to_boundary=float(dist[0]))


def bem_evaluator(sol: BemSolution, batch_consistent_rules: bool = True):
    """Field callback (points -> (u, Du, D2u)) backed by a solved layer."""
    def fn(points: np.ndarray):
        return evaluate_many(sol, points, order=2,
                             batch_consistent_rules=batch_consistent_rules)
    return fn


@dataclass(frozen=True)
class AsymptoticsRow:
    """Worst relative deviation from the leading far-field expansion over a
    spherical sample at one radius."""
    radius: float
    res_u: float
    res_grad: float
    res_hess: float


def asymptotics_check(sol: BemSolution, radii) -> list[AsymptoticsRow]:
    """Compare u, Du, D2u on spheres of given radii against the monopole
    far-field forms Cap r^(2-n), -(n-2) Cap r^(-n) x and the corresponding
    Hessian; all radii must be at least 5 domain circumradii out."""
    radii = [float(r) for r in np.atleast_1d(radii)]
    rmin = 5.0 * sol.circumradius
    for r in radii:
        if r < rmin:
            raise OutOfContractError(
                f"asymptotics radius {r} is below 5 x circumradius = {rmin:.3g}")
    n, cap = sol.n, sol.capacity
    dirs, _ = sphere_directions(1)
    rows = []
    for radius in radii:
        x = radius * dirs
        u, du, d2u = evaluate_many(sol, x, order=2)
        res_u = np.abs(u * radius ** (n - 2) / cap - 1.0).max()
        du_model = -(n - 2) * cap * radius ** (-n) * x
        scale_g = (n - 2) * cap * radius ** (1 - n)
        res_g = (np.linalg.norm(du - du_model, axis=1) / scale_g).max()
        eye = np.eye(3)
        hess_model = (n - 2) * cap * radius ** (-n - 2) * (
            n * x[:, :, None] * x[:, None, :] - radius ** 2 * eye[None])
        scale_h = n * (n - 2) * cap * radius ** (-n)
        res_h = (np.abs(d2u - hess_model).max(axis=(1, 2)) / scale_h).max()
        rows.append(AsymptoticsRow(radius, float(res_u), float(res_g), float(res_h)))
    return rows
