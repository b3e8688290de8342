"""Analytic domain families and triangulated boundary meshes.

Shapes are star-shaped radial graphs r(theta, phi) about the origin: a ball,
an axis-aligned ellipsoid, or a sphere perturbed by real spherical harmonics.
Meshes come from recursive icosphere subdivision mapped through the radial
parametrization; per-panel normals and mean curvature are evaluated from the
exact first/second fundamental forms of the parametrization, never from the
discrete triangles, so curvature-sensitive bounds carry no mesh noise.

Mean curvature is the sum of principal curvatures with respect to the outward
normal: a sphere of radius rho has H = +2/rho.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import InvalidDomainError, MeshError, UnsupportedDimensionError

__all__ = [
    "DomainSpec",
    "SurfaceMesh",
    "build_mesh",
    "enclosed_volume",
    "starshapedness",
    "translate_mesh",
    "export_off",
    "icosphere",
    "sphere_directions",
]


# ---------------------------------------------------------------------------
# Domain specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Parametric description of a smooth star-shaped domain.

    kind is one of "ball", "ellipsoid", "perturbed_sphere".
    For a ball only `radius` is used (any dimension n >= 3 for analytic work;
    meshing requires n = 3).  For an ellipsoid `a, b, c` are the semi-axes.
    A perturbed sphere has base radius `radius` and a list of
    (degree l, order m, amplitude) triples of real spherical harmonics.
    """

    kind: str
    radius: float = 1.0
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    harmonics: tuple[tuple[int, int, float], ...] = ()
    n: int = 3

    def __post_init__(self):
        if self.kind not in ("ball", "ellipsoid", "perturbed_sphere"):
            raise InvalidDomainError(f"unknown domain kind {self.kind!r}")
        if self.n < 3:
            raise UnsupportedDimensionError("dimension must be >= 3")
        if self.kind != "ball" and self.n != 3:
            raise UnsupportedDimensionError(
                f"{self.kind} domains are only defined for n = 3")
        if self.kind == "ball" and self.radius <= 0:
            raise InvalidDomainError("ball radius must be positive")
        if self.kind == "ellipsoid" and min(self.a, self.b, self.c) <= 0:
            raise InvalidDomainError("ellipsoid semi-axes must be positive")
        if self.kind == "perturbed_sphere":
            if self.radius <= 0:
                raise InvalidDomainError("base radius must be positive")
            for l, m, amp in self.harmonics:
                if l < 0 or abs(m) > l:
                    raise InvalidDomainError(f"invalid harmonic (l={l}, m={m})")

    # -- serialization ------------------------------------------------------

    @staticmethod
    def from_dict(doc: dict) -> "DomainSpec":
        try:
            kind = doc["kind"]
        except (KeyError, TypeError):
            raise InvalidDomainError("domain document must carry a 'kind' key")
        if kind == "ball":
            return DomainSpec("ball", radius=float(doc.get("radius", 1.0)),
                              n=int(doc.get("n", 3)))
        if kind == "ellipsoid":
            try:
                return DomainSpec("ellipsoid", a=float(doc["a"]),
                                  b=float(doc["b"]), c=float(doc["c"]))
            except KeyError as exc:
                raise InvalidDomainError(f"ellipsoid spec missing axis {exc}")
        if kind == "perturbed_sphere":
            harmonics = tuple((int(l), int(m), float(amp))
                              for l, m, amp in doc.get("harmonics", ()))
            return DomainSpec("perturbed_sphere",
                              radius=float(doc.get("base_radius", doc.get("radius", 1.0))),
                              harmonics=harmonics)
        raise InvalidDomainError(f"unknown domain kind {kind!r}")

    @staticmethod
    def from_json(text: str) -> "DomainSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidDomainError(f"domain JSON does not parse: {exc}")
        return DomainSpec.from_dict(doc)

    def to_dict(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "radius": self.radius, "n": self.n}
        if self.kind == "ellipsoid":
            return {"kind": "ellipsoid", "a": self.a, "b": self.b, "c": self.c}
        return {"kind": "perturbed_sphere", "base_radius": self.radius,
                "harmonics": [list(h) for h in self.harmonics]}


# ---------------------------------------------------------------------------
# Radial parametrization r(theta, phi) with exact derivatives
# ---------------------------------------------------------------------------

class RadialSurface:
    """Radius function of a star-shaped surface with exact partials.

    Wraps callables r, r_t, r_p, r_tt, r_tp, r_pp of (theta, phi); the
    curved families are generated symbolically so all derivatives are exact.
    """

    def __init__(self, funcs: Sequence[Callable]):
        (self.r, self.r_t, self.r_p, self.r_tt, self.r_tp, self.r_pp) = funcs

    def radius_of_directions(self, dirs: np.ndarray) -> np.ndarray:
        theta, phi = _angles_of(dirs)
        return self.r(theta, phi)


def _angles_of(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.atleast_2d(dirs)
    theta = np.arccos(np.clip(d[:, 2], -1.0, 1.0))
    phi = np.arctan2(d[:, 1], d[:, 0])
    return theta, phi


def _real_ylm_expr(l: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic as a sympy expression."""
    x = sp.cos(theta)
    norm = sp.sqrt(sp.Rational(2 * l + 1, 4) / sp.pi
                   * sp.factorial(l - abs(m)) / sp.factorial(l + abs(m)))
    leg = sp.assoc_legendre(l, abs(m), x)
    if m > 0:
        return sp.sqrt(2) * norm * leg * sp.cos(m * phi)
    if m < 0:
        return sp.sqrt(2) * norm * leg * sp.sin(abs(m) * phi)
    return norm * leg


@lru_cache(maxsize=32)
def _radial_surface_cached(kind: str, params: tuple) -> RadialSurface:
    theta, phi = sp.symbols("theta phi", real=True)
    if kind == "ball":
        (radius,) = params
        const = float(radius)
        zero = lambda t, p: np.zeros_like(np.asarray(t, dtype=float))
        rfun = lambda t, p: np.full_like(np.asarray(t, dtype=float), const)
        return RadialSurface([rfun, zero, zero, zero, zero, zero])
    if kind == "ellipsoid":
        a, b, c = params
        st = sp.sin(theta)
        expr = 1 / sp.sqrt((st * sp.cos(phi)) ** 2 / a**2
                           + (st * sp.sin(phi)) ** 2 / b**2
                           + sp.cos(theta) ** 2 / c**2)
    elif kind == "perturbed_sphere":
        radius, harmonics = params
        expr = sp.Integer(1)
        for l, m, amp in harmonics:
            expr = expr + sp.Float(amp, 17) * _real_ylm_expr(l, m, theta, phi)
        expr = sp.Float(radius, 17) * expr
    else:  # pragma: no cover
        raise InvalidDomainError(f"unknown kind {kind!r}")

    exprs = [expr,
             sp.diff(expr, theta), sp.diff(expr, phi),
             sp.diff(expr, theta, 2), sp.diff(expr, theta, phi),
             sp.diff(expr, phi, 2)]
    funcs = []
    for e in exprs:
        f = sp.lambdify((theta, phi), e, modules="numpy")
        funcs.append(_broadcasting(f))
    return RadialSurface(funcs)


def _broadcasting(f: Callable) -> Callable:
    def wrapped(t, p):
        t = np.asarray(t, dtype=float)
        p = np.asarray(p, dtype=float)
        out = f(t, p)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast_shapes(t.shape, p.shape)).copy()
    return wrapped


def radial_surface(spec: DomainSpec) -> RadialSurface:
    """Radius function (with exact partials) of a domain spec."""
    if spec.kind == "ball":
        return _radial_surface_cached("ball", (spec.radius,))
    if spec.kind == "ellipsoid":
        return _radial_surface_cached("ellipsoid", (spec.a, spec.b, spec.c))
    return _radial_surface_cached("perturbed_sphere", (spec.radius, spec.harmonics))


def _surface_frames(surf: RadialSurface, theta: np.ndarray, phi: np.ndarray):
    """Point, outward unit normal and mean curvature of the radial graph.

    First/second fundamental forms of X = r(theta,phi) * omega(theta,phi);
    the sign is fixed so the unit sphere has H = +2.
    """
    st, ct = np.sin(theta), np.cos(theta)
    sp_, cp = np.sin(phi), np.cos(phi)
    omega = np.stack([st * cp, st * sp_, ct], axis=-1)
    om_t = np.stack([ct * cp, ct * sp_, -st], axis=-1)
    om_p = np.stack([-st * sp_, st * cp, np.zeros_like(st)], axis=-1)
    om_tt = -omega
    om_tp = np.stack([-ct * sp_, ct * cp, np.zeros_like(st)], axis=-1)
    om_pp = np.stack([-st * cp, -st * sp_, np.zeros_like(st)], axis=-1)

    r = surf.r(theta, phi)[:, None]
    r_t = surf.r_t(theta, phi)[:, None]
    r_p = surf.r_p(theta, phi)[:, None]
    r_tt = surf.r_tt(theta, phi)[:, None]
    r_tp = surf.r_tp(theta, phi)[:, None]
    r_pp = surf.r_pp(theta, phi)[:, None]

    x = r * omega
    x_t = r_t * omega + r * om_t
    x_p = r_p * omega + r * om_p
    x_tt = r_tt * omega + 2 * r_t * om_t + r * om_tt
    x_tp = r_tp * omega + r_t * om_p + r_p * om_t + r * om_tp
    x_pp = r_pp * omega + 2 * r_p * om_p + r * om_pp

    nvec = np.cross(x_t, x_p)
    nnorm = np.linalg.norm(nvec, axis=1, keepdims=True)
    nu = nvec / nnorm
    # Radial graphs about an interior origin always satisfy <omega, nu> > 0.
    flip = np.sum(nu * omega, axis=1) < 0
    nu[flip] *= -1.0

    e1 = np.sum(x_t * x_t, axis=1)
    f1 = np.sum(x_t * x_p, axis=1)
    g1 = np.sum(x_p * x_p, axis=1)
    l2 = np.sum(x_tt * nu, axis=1)
    m2 = np.sum(x_tp * nu, axis=1)
    n2 = np.sum(x_pp * nu, axis=1)
    h = -(g1 * l2 - 2 * f1 * m2 + e1 * n2) / (e1 * g1 - f1 * f1)
    return x, nu, h, (x_t, x_p)


# ---------------------------------------------------------------------------
# Icosphere
# ---------------------------------------------------------------------------

def _alignment_rotation() -> np.ndarray:
    """Rotation taking the first base-face center of the standard icosahedron
    onto +x (its antipodal face lands on -x by central symmetry)."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([[-1.0, t, 0.0], [-t, 0.0, 1.0], [0.0, 1.0, t]])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    c = v.sum(axis=0)
    c /= np.linalg.norm(c)
    target = np.array([1.0, 0.0, 0.0])
    axis = np.cross(c, target)
    s = np.linalg.norm(axis)
    cos = float(c @ target)
    k = axis / s
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * kx + (1 - cos) * (kx @ kx)


_AXIS_ALIGNMENT = _alignment_rotation()


def icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere by recursive 4-fold subdivision.

    Returns (vertices, faces) with 20 * 4^level outward-wound triangles.
    The base solid is oriented so that two opposite face centers lie on the
    x-axis: panel centroids then sample the +-x directions exactly at every
    level, where axis-aligned test shapes attain their curvature extremes.
    """
    if level < 0:
        raise ValueError("subdivision level must be >= 0")
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts = verts @ _AXIS_ALIGNMENT.T

    for _ in range(level):
        vlist = list(verts)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            idx = midpoint.get(key)
            if idx is None:
                p = vlist[i] + vlist[j]
                p = p / np.linalg.norm(p)
                vlist.append(p)
                idx = len(vlist) - 1
                midpoint[key] = idx
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)

    # Enforce outward winding: (v1-v0) x (v2-v0) must point away from origin.
    tri = verts[faces]
    nrm = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    cen = tri.mean(axis=1)
    wrong = np.sum(nrm * cen, axis=1) < 0
    if np.any(wrong):
        faces[wrong] = faces[wrong][:, [0, 2, 1]]
    return verts, faces


def _spherical_triangle_areas(dirs: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Exact geodesic triangle areas on the unit sphere (l'Huilier)."""
    a_v, b_v, c_v = dirs[faces[:, 0]], dirs[faces[:, 1]], dirs[faces[:, 2]]

    def arc(u, v):
        return 2.0 * np.arcsin(np.clip(np.linalg.norm(u - v, axis=1) / 2.0, 0, 1))

    a, b, c = arc(b_v, c_v), arc(a_v, c_v), arc(a_v, b_v)
    s = 0.5 * (a + b + c)
    tan_e4 = np.sqrt(np.clip(
        np.tan(s / 2) * np.tan((s - a) / 2) * np.tan((s - b) / 2) * np.tan((s - c) / 2),
        0.0, None))
    return 4.0 * np.arctan(tan_e4)


def sphere_directions(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Direction set for spherical quadrature: icosphere face centroids with
    their exact geodesic cell areas as weights (the weights sum to 4*pi)."""
    verts, faces = icosphere(level)
    cen = verts[faces].mean(axis=1)
    cen /= np.linalg.norm(cen, axis=1, keepdims=True)
    return cen, _spherical_triangle_areas(verts, faces)


# ---------------------------------------------------------------------------
# Surface mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceMesh:
    """Triangulated boundary with analytic per-panel geometric data.

    `centroids` are the flat-triangle centroids (collocation points);
    `surface_points` project each centroid direction back onto the analytic
    surface, and `normals`, `mean_curvature`, `support` are evaluated there
    from the exact parametrization.  `support` is <x, nu> at the surface
    point.  `areas` are curved-patch areas of the radial graph over each
    panel's geodesic direction cell (r^2 / <omega, nu> times the exact
    geodesic cell area), so they sum to the true surface area on a ball;
    `flat_areas` are the plain triangle areas the panel quadratures build on.
    A finished mesh is immutable and safe to share across threads.
    """

    domain: DomainSpec | None
    level: int
    vertices: np.ndarray          # (V, 3)
    panels: np.ndarray            # (F, 3) int
    centroids: np.ndarray         # (F, 3)
    areas: np.ndarray             # (F,) curved-patch areas
    normals: np.ndarray           # (F, 3)
    mean_curvature: np.ndarray    # (F,)
    support: np.ndarray           # (F,)
    surface_points: np.ndarray    # (F, 3)
    diameters: np.ndarray         # (F,) max edge length
    flat_areas: np.ndarray        # (F,) flat-triangle areas (quadrature base)

    @property
    def n_panels(self) -> int:
        return len(self.panels)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def circumradius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())


def build_mesh(spec: DomainSpec, level: int) -> SurfaceMesh:
    """Triangulate the boundary of a domain at the given refinement level.

    Subdivides an icosphere and maps it through the radial parametrization;
    panel count is 20 * 4^level.  Normals and mean curvature come from the
    analytic fundamental forms at the projected panel centroids.
    """
    if spec.n != 3:
        raise UnsupportedDimensionError("meshing is implemented for n = 3 only")
    if level < 0:
        raise InvalidDomainError("refinement level must be >= 0")

    surf = radial_surface(spec)
    dirs, faces = icosphere(level)
    theta_v, phi_v = _angles_of(dirs)
    r_v = surf.r(theta_v, phi_v)
    if np.any(r_v <= 0):
        raise InvalidDomainError(
            "radial map is not strictly positive at mesh nodes "
            "(perturbation amplitude too large)")
    verts = r_v[:, None] * dirs

    tri = verts[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    centroids = tri.mean(axis=1)
    edges = np.stack([
        np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1),
        np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1),
        np.linalg.norm(tri[:, 0] - tri[:, 2], axis=1),
    ], axis=1)
    diameters = edges.max(axis=1)

    cen_dirs = centroids / np.linalg.norm(centroids, axis=1, keepdims=True)
    theta_c, phi_c = _angles_of(cen_dirs)
    surface_points, normals, h, tangents = _surface_frames(surf, theta_c, phi_c)
    r_c = surf.r(theta_c, phi_c)
    if np.any(r_c <= 0):
        raise InvalidDomainError("radial map vanishes at a panel centroid")

    support = np.sum(surface_points * normals, axis=1)

    # Curved-patch area of the radial graph over the geodesic direction cell.
    cell_areas = _spherical_triangle_areas(dirs, faces)
    cos_alpha = np.sum(cen_dirs * normals, axis=1)
    curved_areas = r_c * r_c / cos_alpha * cell_areas

    norm_err = np.abs(np.linalg.norm(normals, axis=1) - 1.0).max()
    if norm_err > 1e-12:
        raise MeshError(f"normals are not unit vectors (error {norm_err:.2e})")
    flat_out = np.sum(cross * normals, axis=1)
    if np.any(flat_out <= 0):
        raise MeshError("panel winding disagrees with the analytic outward normal")
    if areas.sum() <= 0:
        raise MeshError("mesh has nonpositive total area")

    return SurfaceMesh(
        domain=spec, level=level, vertices=verts, panels=faces,
        centroids=centroids, areas=curved_areas, normals=normals,
        mean_curvature=h, support=support, surface_points=surface_points,
        diameters=diameters, flat_areas=areas)


def enclosed_volume(mesh: SurfaceMesh) -> float:
    """Enclosed volume via the divergence theorem, (1/3) sum <x, nu> area."""
    if mesh.total_area <= 0 or mesh.n_panels == 0:
        raise MeshError("cannot compute the volume of a degenerate mesh")
    return float(np.sum(mesh.support * mesh.areas) / 3.0)


def starshapedness(mesh: SurfaceMesh) -> float:
    """Minimum of the support function <x, nu> over panels.

    A positive value certifies star-shapedness about the origin at mesh
    resolution.
    """
    return float(mesh.support.min())


def translate_mesh(mesh: SurfaceMesh, vec) -> SurfaceMesh:
    """Rigidly translated copy of a mesh.

    Normals, areas and curvatures are unchanged; support values are
    recomputed about the (now shifted) origin, and the analytic domain
    reference is dropped because the radial parametrization no longer
    describes the translated surface.
    """
    v = np.asarray(vec, dtype=float).reshape(3)
    pts = mesh.surface_points + v
    return SurfaceMesh(
        domain=None, level=mesh.level, vertices=mesh.vertices + v,
        panels=mesh.panels, centroids=mesh.centroids + v, areas=mesh.areas,
        normals=mesh.normals, mean_curvature=mesh.mean_curvature,
        support=np.sum(pts * mesh.normals, axis=1), surface_points=pts,
        diameters=mesh.diameters, flat_areas=mesh.flat_areas)


def export_off(mesh: SurfaceMesh) -> str:
    """Mesh as OFF text (vertices + triangles) for external inspection."""
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.panels)} 0"]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.panels:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    return "\n".join(lines) + "\n"
