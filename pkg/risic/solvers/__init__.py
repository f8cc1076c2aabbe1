from ..config import SolverSettings
from ..solver import SdpSolver
from .admm import AdmmSolver
from .conic import CvxpySolver


def make_solver(settings: SolverSettings) -> SdpSolver:
    """Instantiate the back-end named by settings.backend."""
    if settings.backend == "cvxpy":
        return CvxpySolver(settings)
    return AdmmSolver(settings)


__all__ = ["AdmmSolver", "CvxpySolver", "make_solver"]
