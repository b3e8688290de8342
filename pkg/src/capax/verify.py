"""Inequality suite: every sharp bound gets a CheckRecord with both sides,
a residual and a verdict.

Record semantics: residual = lhs - rhs, and an inequality lhs <= rhs is
satisfied iff residual <= slack (slack is the relative tolerance times the
scale of the two sides).  Verdicts:

  holds          inequality satisfied with a gap beyond saturation
  saturated      |residual| within the saturation tolerance AND the domain
                 passes the rigidity probe (trace-free g-Hessian residual);
                 this is the numeric signature of the round equality case
  violated       inequality broken beyond slack: the bounds are theorems,
                 so a violation on a smooth domain is a build-failing
                 discretization error
  out-of-window  check not applicable (a sphere-theorem hypothesis is not
                 met, or a precondition like star-shapedness fails)

Hypothesis-style records (the pinching / surface-radius / volume-radius
sphere criteria) read lhs <= rhs as the *assumption* of a rigidity theorem:
when it fails the record is out-of-window (the theorem concludes nothing);
when it holds the domain must pass the rigidity probe, otherwise the record
is violated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import qmc

from .bem import BemSolution, CapacityEstimates, capacity_crosschecks
from .conformal import lift_arrays
from .constants import unit_ball_volume, unit_sphere_area
from .errors import LevelWindowError
from .fields import evaluate_many
from .geometry import (SurfaceMesh, enclosed_volume, radial_surface,
                       sphere_directions, starshapedness, _angles_of)
from .levels import extract_level, flux_and_volume_curves

__all__ = [
    "CheckRecord",
    "Tolerances",
    "VerificationReport",
    "rigidity_probe",
    "check_main_gradient_inequality",
    "check_sphere_theorem_1",
    "check_curvature_inequalities",
    "check_pfunction_max_principle",
    "check_symmetrization_chain",
    "run_all_checks",
    "exterior_sample_points",
]


@dataclass(frozen=True)
class Tolerances:
    relative_slack: float = 0.015      # BEM-derived comparisons
    analytic_slack: float = 1e-6       # closed-form comparisons
    saturation: float = 0.01           # equality-case detection band
    probe: float = 5e-3                # rigidity-probe residual gate
    far_field: float = 0.02            # far-field limit agreement


@dataclass(frozen=True)
class CheckRecord:
    name: str
    anchor: str
    lhs: float
    rhs: float
    residual: float
    slack: float
    verdict: str


def _record(name: str, anchor: str, lhs: float, rhs: float, tol: Tolerances,
            probe_ok: bool, hypothesis: bool = False,
            slack: float | None = None) -> CheckRecord:
    scale = max(abs(lhs), abs(rhs), 1e-300)
    slack_abs = tol.relative_slack * scale if slack is None else slack * scale
    residual = lhs - rhs
    if residual > slack_abs:
        verdict = "out-of-window" if hypothesis else "violated"
    elif abs(residual) <= tol.saturation * scale:
        if probe_ok:
            verdict = "saturated"
        else:
            # numerically equal sides without roundness: for a plain
            # inequality that is still a pass; for a rigidity hypothesis it
            # contradicts the theorem
            verdict = "violated" if hypothesis else "holds"
    else:
        verdict = "violated" if (hypothesis and not probe_ok) else "holds"
    return CheckRecord(name=name, anchor=anchor, lhs=float(lhs), rhs=float(rhs),
                       residual=float(residual), slack=float(slack_abs),
                       verdict=verdict)


def _approx_record(name: str, anchor: str, value: float, target: float,
                   rel_tol: float) -> CheckRecord:
    scale = max(abs(target), 1e-300)
    residual = abs(value - target)
    verdict = "holds" if residual <= rel_tol * scale else "violated"
    return CheckRecord(name=name, anchor=anchor, lhs=float(value),
                       rhs=float(target), residual=float(residual),
                       slack=float(rel_tol * scale), verdict=verdict)


def rigidity_probe(sol: BemSolution, tol: float = 5e-3) -> tuple[bool, float]:
    """Trace-free part of the g-Hessian of f over a standard exterior sample.

    Proportionality Hess_g f = lambda g characterizes the round case; the
    probe passes iff the largest trace-free entry over the sample stays
    below tol.  Used to police 'saturated' verdicts.
    """
    dirs, _ = sphere_directions(1)
    radii = np.array([1.6, 2.4]) * sol.circumradius
    pts = np.concatenate([r * dirs for r in radii], axis=0)
    u, du, d2u = evaluate_many(sol, pts, order=2)
    out = lift_arrays(u, du, d2u, sol.n)
    frame = out["hess_g"] / (1.0 - out["f"])[:, None, None] ** 2
    trace = np.einsum("mii->m", frame) / sol.n
    frame = frame - trace[:, None, None] * np.eye(sol.n)[None]
    resid = float(np.abs(frame).max())
    return resid <= tol, resid


def check_main_gradient_inequality(sol: BemSolution,
                                   tol: Tolerances = Tolerances(),
                                   probe_ok: bool | None = None) -> CheckRecord:
    """Capacity bounded below through the boundary gradient maximum."""
    if probe_ok is None:
        probe_ok = rigidity_probe(sol, tol.probe)[0]
    n = sol.n
    lhs = 1.0 / sol.capacity
    rhs = (sol.max_boundary_grad / (n - 2)) ** (n - 2)
    return _record("gradient-capacity-bound",
                   "1/Cap <= (max_bdry |Du|/(n-2))^(n-2)",
                   lhs, rhs, tol, probe_ok)


def check_sphere_theorem_1(sol: BemSolution, mesh: SurfaceMesh | None = None,
                           tol: Tolerances = Tolerances(),
                           probe_ok: bool | None = None) -> CheckRecord:
    """Surface-radius sphere criterion (hypothesis record): a boundary
    gradient everywhere below the inverse surface radius forces roundness."""
    mesh = sol.mesh if mesh is None else mesh
    if probe_ok is None:
        probe_ok = rigidity_probe(sol, tol.probe)[0]
    n = sol.n
    lhs = sol.max_boundary_grad / (n - 2)
    rhs = (unit_sphere_area(n) / mesh.total_area) ** (1.0 / (n - 1))
    return _record("surface-radius-sphere-criterion",
                   "max_bdry |Du|/(n-2) <= (|S^(n-1)|/|bdry|)^(1/(n-1)) forces a round ball",
                   lhs, rhs, tol, probe_ok, hypothesis=True)


def check_curvature_inequalities(sol: BemSolution, mesh: SurfaceMesh | None = None,
                                 tol: Tolerances = Tolerances(),
                                 probe_ok: bool | None = None) -> list[CheckRecord]:
    """Mean-curvature bounds: gradient-curvature comparison, curvature
    capacity bound, the pinching and star-shaped sphere criteria, and the
    volume-capacity (symmetrization) inequality."""
    mesh = sol.mesh if mesh is None else mesh
    if probe_ok is None:
        probe_ok = rigidity_probe(sol, tol.probe)[0]
    n = sol.n
    cap = sol.capacity
    max_h = float(np.abs(mesh.mean_curvature).max())
    vol = enclosed_volume(mesh)
    records = [
        _record("gradient-curvature-bound",
                "max_bdry |Du|/(n-2) <= max_bdry |H|/(n-1)",
                sol.max_boundary_grad / (n - 2), max_h / (n - 1),
                tol, probe_ok),
        _record("curvature-capacity-bound",
                "1/Cap <= (max_bdry |H|/(n-1))^(n-2)",
                1.0 / cap, (max_h / (n - 1)) ** (n - 2), tol, probe_ok),
        _record("curvature-pinching-sphere-criterion",
                "|H|/(n-1) <= Cap^(-1/(n-2)) pointwise forces a round sphere",
                max_h / (n - 1), cap ** (-1.0 / (n - 2)), tol, probe_ok,
                hypothesis=True),
    ]
    support_min = starshapedness(mesh)
    star_rhs = (unit_ball_volume(n) / vol) ** (1.0 / n)
    if support_min <= 0:
        records.append(CheckRecord(
            name="starshaped-sphere-criterion",
            anchor="|H|/(n-1) <= (|B^n|/|vol|)^(1/n) forces a round sphere (starshaped only)",
            lhs=max_h / (n - 1), rhs=star_rhs, residual=float("nan"),
            slack=0.0, verdict="out-of-window"))
    else:
        records.append(_record(
            "starshaped-sphere-criterion",
            "|H|/(n-1) <= (|B^n|/|vol|)^(1/n) forces a round sphere (starshaped only)",
            max_h / (n - 1), star_rhs, tol, probe_ok, hypothesis=True))
    records.append(_record(
        "volume-capacity-bound",
        "(|vol|/|B^n|)^((n-2)/n) <= Cap",
        (vol / unit_ball_volume(n)) ** ((n - 2.0) / n), cap, tol, probe_ok))
    return records


def exterior_sample_points(sol: BemSolution, count: int, seed: int) -> np.ndarray:
    """Seeded low-discrepancy exterior points between the exclusion shell and
    three circumradii, uniform over directions and shell depth."""
    mesh = sol.mesh
    sampler = qmc.Halton(d=3, seed=seed)
    q = sampler.random(count)
    cos_t = 2.0 * q[:, 0] - 1.0
    sin_t = np.sqrt(np.maximum(1.0 - cos_t ** 2, 0.0))
    phi = 2.0 * np.pi * q[:, 1]
    dirs = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
    if mesh.domain is not None:
        surf = radial_surface(mesh.domain)
        theta, az = _angles_of(dirs)
        r_surf = surf.r(theta, az)
    else:
        r_surf = np.full(count, mesh.circumradius)
    cen_dirs = mesh.centroids / np.linalg.norm(mesh.centroids, axis=1, keepdims=True)
    local_diam = mesh.diameters[np.argmax(dirs @ cen_dirs.T, axis=1)]
    r_min = r_surf + 1.0 * local_diam
    r_max = 3.0 * mesh.circumradius
    radius = r_min + (r_max - r_min) * q[:, 2]
    return radius[:, None] * dirs


def check_pfunction_max_principle(sol: BemSolution, sample_points: np.ndarray,
                                  tol: Tolerances = Tolerances(),
                                  probe_ok: bool | None = None) -> list[CheckRecord]:
    """Interior-point bound |Du| u^(-(n-1)/(n-2)) <= max_bdry |Du| over the
    sample sweep, plus its far-field limit (n-2) Cap^(-1/(n-2))."""
    if probe_ok is None:
        probe_ok = rigidity_probe(sol, tol.probe)[0]
    n = sol.n
    u, du, _ = evaluate_many(sol, sample_points, order=1)
    pvals = np.linalg.norm(du, axis=1) * u ** (-(n - 1.0) / (n - 2.0))
    rec = _record("pfunction-max-principle",
                  "|Du| u^(-(n-1)/(n-2)) <= max_bdry |Du| on the exterior",
                  float(pvals.max()), sol.max_boundary_grad, tol, probe_ok)
    radius = max(20.0, 5.5 * sol.circumradius)
    dirs, _ = sphere_directions(1)
    u_f, du_f, _ = evaluate_many(sol, radius * dirs, order=1)
    far = float((np.linalg.norm(du_f, axis=1)
                 * u_f ** (-(n - 1.0) / (n - 2.0))).max())
    target = (n - 2) * sol.capacity ** (-1.0 / (n - 2))
    far_rec = _approx_record(
        "pfunction-far-field-limit",
        "|Du| u^(-(n-1)/(n-2)) -> (n-2) Cap^(-1/(n-2)) at infinity",
        far, target, tol.far_field)
    return [rec, far_rec]


def check_symmetrization_chain(sol: BemSolution, t_grid,
                               tol: Tolerances = Tolerances(),
                               probe_ok: bool | None = None,
                               direction_level: int = 3) -> list[CheckRecord]:
    """Per-level Cauchy-Schwarz and isoperimetric steps of the
    symmetrization proof of the volume-capacity bound."""
    if probe_ok is None:
        probe_ok = rigidity_probe(sol, tol.probe)[0]
    n = sol.n
    curves = flux_and_volume_curves(sol, t_grid, direction_level)
    t_vals = curves["Flux"].params
    records = []
    for i, t in enumerate(t_vals):
        area = curves["AreaEuclidean"].values[i]
        flux = curves["Flux"].values[i]
        invg = curves["InvGradIntegral"].values[i]
        vol = curves["Volume"].values[i]
        records.append(_record(
            f"cauchy-schwarz[t={t:g}]",
            "|level|^2 <= (int |Du|) (int 1/|Du|)",
            area * area, flux * invg, tol, probe_ok))
        records.append(_record(
            f"isoperimetric[t={t:g}]",
            "(|vol_t|/|B^n|)^(1/n) <= (|level_t|/|S^(n-1)|)^(1/(n-1))",
            (vol / unit_ball_volume(n)) ** (1.0 / n),
            (area / unit_sphere_area(n)) ** (1.0 / (n - 1)),
            tol, probe_ok))
    return records


@dataclass
class VerificationReport:
    """All check records for one solved domain plus capacity summary."""

    domain: dict
    capacity: CapacityEstimates
    checks: list[CheckRecord]
    meta: dict = field(default_factory=dict)

    @property
    def violations(self) -> list[CheckRecord]:
        return [c for c in self.checks if c.verdict == "violated"]

    @property
    def saturated(self) -> list[CheckRecord]:
        return [c for c in self.checks if c.verdict == "saturated"]

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "capacity": {"charge": self.capacity.charge,
                         "flux": self.capacity.flux,
                         "pohozaev": self.capacity.pohozaev},
            "checks": [asdict(c) for c in self.checks],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_all_checks(sol: BemSolution, t_grid=(0.2, 0.3, 0.4, 0.5),
                   seed: int = 0, sample_count: int = 500,
                   tol: Tolerances = Tolerances(),
                   direction_level: int = 3) -> VerificationReport:
    """Assemble the full report for a solved domain."""
    probe_ok, probe_resid = rigidity_probe(sol, tol.probe)
    caps = capacity_crosschecks(sol)
    checks: list[CheckRecord] = [
        check_main_gradient_inequality(sol, tol, probe_ok),
        check_sphere_theorem_1(sol, None, tol, probe_ok),
    ]
    checks.extend(check_curvature_inequalities(sol, None, tol, probe_ok))
    samples = exterior_sample_points(sol, sample_count, seed)
    checks.extend(check_pfunction_max_principle(sol, samples, tol, probe_ok))

    pairwise = max(
        abs(caps.charge - caps.flux), abs(caps.charge - caps.pohozaev),
        abs(caps.flux - caps.pohozaev)) / caps.charge
    checks.append(_approx_record(
        "capacity-route-agreement",
        "charge, flux and position-weighted capacity routes agree",
        pairwise + 1.0, 1.0, tol.relative_slack))

    radius = 1000.0 * sol.circumradius
    dirs, _ = sphere_directions(1)
    u_far, _, _ = evaluate_many(sol, radius * dirs, order=0)
    checks.append(_approx_record(
        "far-field-capacity",
        "u |x|^(n-2) -> Cap at infinity",
        float((u_far * radius ** (sol.n - 2)).mean()), sol.capacity, 0.005))

    window_note = None
    try:
        checks.extend(check_symmetrization_chain(sol, t_grid, tol, probe_ok,
                                                 direction_level))
    except LevelWindowError as exc:
        window_note = str(exc)

    meta = {
        "mesh_level": sol.mesh.level,
        "panel_count": sol.mesh.n_panels,
        "direction_level": direction_level,
        "seed": seed,
        "sample_count": sample_count,
        "level_grid": [float(t) for t in t_grid],
        "relative_slack": tol.relative_slack,
        "saturation_tolerance": tol.saturation,
        "probe_tolerance": tol.probe,
        "probe_residual": probe_resid,
        "probe_passed": probe_ok,
        "solve_residual": sol.solve_residual,
    }
    if window_note:
        meta["level_window_note"] = window_note
    domain = sol.mesh.domain.to_dict() if sol.mesh.domain is not None else {}
    return VerificationReport(domain=domain, capacity=caps, checks=checks,
                              meta=meta)
