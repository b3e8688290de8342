"""capax: boundary-integral capacity solver and inequality verifier for
exterior harmonic potentials of smooth bounded domains."""

__version__ = "0.1.0"

from .geometry import DomainSpec, SurfaceMesh, build_mesh, enclosed_volume, starshapedness
from .bem import BemSolution, assemble_and_solve, boundary_gradient, capacity_crosschecks
from .fields import FieldSample, evaluate, asymptotics_check
from .conformal import ConformalSample, lift
from .levels import LevelSurface, FunctionalCurve, extract_level, u_functional, phi_functional
from .verify import VerificationReport, run_all_checks

__all__ = [
    "DomainSpec", "SurfaceMesh", "build_mesh", "enclosed_volume", "starshapedness",
    "BemSolution", "assemble_and_solve", "boundary_gradient", "capacity_crosschecks",
    "FieldSample", "evaluate", "asymptotics_check",
    "ConformalSample", "lift",
    "LevelSurface", "FunctionalCurve", "extract_level", "u_functional", "phi_functional",
    "VerificationReport", "run_all_checks",
    "__version__",
]
