"""Single-layer collocation solver for the exterior Dirichlet problem.

The capacitary potential u is represented as a single layer on the boundary,
u(x) = sum_j sigma_j * int_{panel j} |x - y|^(-1) dsigma(y), with constant
density per flat triangle and collocation at panel centroids.  The kernel is
|x - y|^(2-n) with no normalization factor, so the total charge equals the
capacity (u ~ Cap |x|^(2-n) at infinity) and Cap(ball rho) = rho^(n-2).

Diagonal entries use the exact in-plane potential of a constant-density flat
triangle; entries whose collocation point sits closer to a source panel than
a few panel diameters are recomputed with subdivided quadrature.  Panel
quadrature weights are scaled to the curved-patch areas stored on the mesh,
which keeps the discrete charge consistent with the geometric surface
measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .constants import unit_sphere_area
from .errors import MeshError, SolveError, UnsupportedDimensionError
from .geometry import SurfaceMesh
from .util import chunked, run_blocks

__all__ = [
    "BemSolution",
    "CapacityEstimates",
    "assemble_and_solve",
    "boundary_gradient",
    "capacity_crosschecks",
    "panel_sources",
    "triangle_rule",
]

# Symmetric Gauss rules on the reference triangle, barycentric points with
# weights normalised to sum to 1.
_RULE_DEG2 = (
    np.array([[2 / 3, 1 / 6, 1 / 6],
              [1 / 6, 2 / 3, 1 / 6],
              [1 / 6, 1 / 6, 2 / 3]]),
    np.full(3, 1 / 3),
)

_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
_RULE_DEG5 = (
    np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
        [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2],
    ]),
    np.array([0.225,
              0.132394152788506, 0.132394152788506, 0.132394152788506,
              0.125939180544827, 0.125939180544827, 0.125939180544827]),
)


def triangle_rule(degree: int = 5, subdiv: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric quadrature rule, optionally refined by 4-fold subdivision.

    Returns (points (K,3), weights (K,)) with weights summing to 1.
    """
    bary, w = _RULE_DEG2 if degree <= 2 else _RULE_DEG5
    corners = [np.eye(3)]
    for _ in range(subdiv):
        nxt = []
        for tri in corners:
            m01 = 0.5 * (tri[0] + tri[1])
            m12 = 0.5 * (tri[1] + tri[2])
            m20 = 0.5 * (tri[2] + tri[0])
            nxt.extend([
                np.array([tri[0], m01, m20]),
                np.array([tri[1], m12, m01]),
                np.array([tri[2], m20, m12]),
                np.array([m01, m12, m20]),
            ])
        corners = nxt
    pts = np.concatenate([bary @ tri for tri in corners], axis=0)
    wts = np.concatenate([w / len(corners) for _ in corners], axis=0)
    return pts, wts


def panel_sources(mesh: SurfaceMesh, degree: int = 5, subdiv: int = 0,
                  panels=None) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points and weights on (a subset of) the mesh panels.

    Points lie on the flat triangles; the weights of each panel sum to its
    curved-patch area.  Shapes: points (F, K, 3), weights (F, K).
    """
    bary, w = triangle_rule(degree, subdiv)
    faces = mesh.panels if panels is None else mesh.panels[panels]
    areas = mesh.areas if panels is None else mesh.areas[panels]
    tri = mesh.vertices[faces]                      # (F, 3, 3)
    pts = np.einsum("kb,fbx->fkx", bary, tri)
    wts = w[None, :] * areas[:, None]
    return pts, wts


def _self_potential_flat(tri: np.ndarray, p: np.ndarray) -> float:
    """Exact integral of 1/|p-y| over a flat triangle, p in its plane.

    Decomposes the triangle into three sub-triangles at p; each contributes
    d * log((r1 + r2 + L) / (r1 + r2 - L)) with d the distance from p to the
    edge line and L the edge length.
    """
    total = 0.0
    for k in range(3):
        va, vb = tri[k], tri[(k + 1) % 3]
        ell = np.linalg.norm(vb - va)
        r1 = np.linalg.norm(va - p)
        r2 = np.linalg.norm(vb - p)
        twice_area = np.linalg.norm(np.cross(va - p, vb - p))
        if ell < 1e-300 or twice_area < 1e-300:
            continue
        d = twice_area / ell
        total += d * math.log((r1 + r2 + ell) / (r1 + r2 - ell))
    return total


class CapacityEstimates(NamedTuple):
    """Three independent discretizations of the capacity."""
    charge: float
    flux: float
    pohozaev: float


@dataclass
class BemSolution:
    """Solved single-layer system on a surface mesh.

    sigma is the per-panel charge density, capacity the total charge,
    boundary_grad the per-panel |Du| on the boundary via the full jump of
    the normal derivative (the interior harmonic extension is constant, so
    |Du| = (n-2) |S^(n-1)| sigma).
    """

    mesh: SurfaceMesh
    sigma: np.ndarray
    capacity: float
    boundary_grad: np.ndarray
    solve_residual: float
    n: int = 3
    _src_pts: np.ndarray = field(repr=False, default=None)
    _src_wts: np.ndarray = field(repr=False, default=None)
    _cache: dict = field(repr=False, default_factory=dict)

    @property
    def circumradius(self) -> float:
        return self.mesh.circumradius

    @property
    def max_boundary_grad(self) -> float:
        return float(self.boundary_grad.max())


def _assemble_matrix(mesh: SurfaceMesh, near_factor: float,
                     near_subdiv: int) -> np.ndarray:
    npan = mesh.n_panels
    src, wts = panel_sources(mesh, degree=5)
    sflat = src.reshape(-1, 3)
    wflat = wts.reshape(-1)
    s_sq = np.einsum("ij,ij->i", sflat, sflat)
    cen = mesh.centroids
    c_sq = np.einsum("ij,ij->i", cen, cen)

    a_mat = np.empty((npan, npan))
    near_pairs: list[np.ndarray] = []
    k = src.shape[1]

    def fill_block(rows: slice):
        x = cen[rows]
        d2 = x @ sflat.T
        d2 *= -2.0
        d2 += s_sq[None, :]
        d2 += (x * x).sum(axis=1)[:, None]
        # self-panel distances may cancel to ~0 here; those entries are
        # replaced by the exact diagonal / near-pair requadrature below
        with np.errstate(divide="ignore", invalid="ignore"):
            np.sqrt(np.maximum(d2, 0.0, out=d2), out=d2)
            np.reciprocal(d2, out=d2)
        d2 *= wflat[None, :]
        a_mat[rows] = d2.reshape(x.shape[0], npan, k).sum(axis=2)
        # collocation-to-centroid distances flag near pairs for requadrature
        dc = cen[rows, None, :] - cen[None, :, :]
        dist_c = np.sqrt(np.einsum("ijk,ijk->ij", dc, dc))
        ii, jj = np.nonzero(dist_c < near_factor * mesh.diameters[None, :])
        near_pairs.append(np.stack([ii + rows.start, jj], axis=1))

    run_blocks(fill_block, chunked(npan, 256))

    pairs = np.concatenate(near_pairs, axis=0)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    # order-independent assignment regardless of thread scheduling
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]

    bary, w = triangle_rule(5, near_subdiv)
    tri_all = mesh.vertices[mesh.panels]
    for chunk in chunked(len(pairs), 4096):
        ii, jj = pairs[chunk, 0], pairs[chunk, 1]
        tri = tri_all[jj]
        pts = np.einsum("kb,pbx->pkx", bary, tri)
        diff = mesh.centroids[ii][:, None, :] - pts
        dist = np.sqrt(np.einsum("pkx,pkx->pk", diff, diff))
        vals = (w[None, :] / dist).sum(axis=1) * mesh.areas[jj]
        a_mat[ii, jj] = vals

    # exact self term, scaled from the flat triangle to the curved patch
    scale = mesh.areas / mesh.flat_areas
    for i in range(npan):
        a_mat[i, i] = _self_potential_flat(tri_all[i], mesh.centroids[i]) * scale[i]
    return a_mat


def assemble_and_solve(mesh: SurfaceMesh, near_factor: float = 2.0,
                       near_subdiv: int = 2) -> BemSolution:
    """Assemble and solve the collocation system A sigma = 1.

    Raises SolveError when the linear solve is unreliable (large residual or
    singular matrix) and MeshError when the resulting density is not strictly
    positive, which signals a discretization failure.
    """
    if mesh.domain is not None and mesh.domain.n != 3:
        raise UnsupportedDimensionError("the collocation solver requires n = 3")
    if mesh.n_panels == 0 or mesh.total_area <= 0:
        raise MeshError("cannot solve on a degenerate mesh")

    a_mat = _assemble_matrix(mesh, near_factor, near_subdiv)
    rhs = np.ones(mesh.n_panels)
    try:
        sigma = scipy.linalg.solve(a_mat, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise SolveError(f"singular collocation system: {exc}")

    residual = float(np.linalg.norm(a_mat @ sigma - rhs) / math.sqrt(mesh.n_panels))
    if not np.isfinite(residual) or residual > 1e-10:
        cond = float(np.linalg.cond(a_mat))
        raise SolveError(
            f"unreliable solve: relative residual {residual:.3e}, "
            f"condition estimate {cond:.3e}")
    if np.any(sigma <= 0):
        raise MeshError(
            "negative panel charge density: the discretization failed "
            f"(min sigma = {sigma.min():.3e})")

    capacity = float(sigma @ mesh.areas)
    n = 3
    grad = (n - 2) * unit_sphere_area(n) * sigma
    src, wts = panel_sources(mesh, degree=5)
    return BemSolution(mesh=mesh, sigma=sigma, capacity=capacity,
                       boundary_grad=grad, solve_residual=residual, n=n,
                       _src_pts=src, _src_wts=wts)


def boundary_gradient(sol: BemSolution) -> np.ndarray:
    """Per-panel |Du| on the boundary.

    The interior extension of the potential is the constant 1, so the full
    normal-derivative jump of the single layer gives
    |Du| = (n-2) |S^(n-1)| sigma.
    """
    return sol.boundary_grad.copy()


def capacity_crosschecks(sol: BemSolution, mesh: SurfaceMesh | None = None
                         ) -> CapacityEstimates:
    """Capacity via total charge, boundary flux, and the position-weighted
    square-gradient boundary integral (computed about the origin, which must
    be interior for the third route to be meaningful)."""
    mesh = sol.mesh if mesh is None else mesh
    n = sol.n
    omega = unit_sphere_area(n)
    charge = float(sol.sigma @ mesh.areas)
    flux = float(sol.boundary_grad @ mesh.areas) / ((n - 2) * omega)
    poho = float(((sol.boundary_grad / (n - 2)) ** 2 * mesh.support) @ mesh.areas) / omega
    return CapacityEstimates(charge=charge, flux=flux, pohozaev=poho)
