# src/risic/solver.py
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
)

from .config import SolverSettings
from .exceptions import SolverError

SQRT2 = np.sqrt(2.0)


class Sense(str, Enum):
    LE = "le"
    EQ = "eq"
    GE = "ge"


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERS = "max_iters"
    NUMERICAL_TROUBLE = "numerical_trouble"


@dataclass(frozen=True)
class Constraint:
    """tr(A X) + xi_coeff * xi  (sense)  rhs."""

    A: np.ndarray
    sense: Sense
    rhs: float
    xi_coeff: float = 0.0


@dataclass
class SdpProblem:
    """
    maximize tr(C X) + c_xi * xi over Hermitian X >= 0 and scalar xi.

    C may be None for a pure feasibility problem.
    """

    dim: int
    constraints: List[Constraint] = field(default_factory=list)
    C: Optional[np.ndarray] = None
    c_xi: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise SolverError(f"SDP dimension must be >= 1, got {self.dim}")
        mats = [c.A for c in self.constraints]
        if self.C is not None:
            mats.append(self.C)
        for j, A in enumerate(mats):
            if A.shape != (self.dim, self.dim):
                raise SolverError(
                    f"Matrix {j} has shape {A.shape}, expected {(self.dim, self.dim)}"
                )
            scale = max(1.0, float(np.max(np.abs(A))))
            if np.max(np.abs(A - A.conj().T)) > 1e-12 * scale:
                raise SolverError(f"Matrix {j} is not Hermitian")

    @property
    def has_objective(self) -> bool:
        return self.c_xi != 0.0 or (self.C is not None and bool(np.any(self.C)))

    def objective(self, X: np.ndarray, xi: float) -> float:
        value = self.c_xi * xi
        if self.C is not None:
            value += float(np.real(np.vdot(self.C, X)))
        return value


@dataclass
class SdpSolution:
    X: np.ndarray
    xi: float
    status: Status
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int = 0
    objective: float = float("nan")
    # back-end state for warm starts; ADMM keeps its scaled multiplier and penalty
    multiplier: Optional[np.ndarray] = None
    rho: float = 1.0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class FeasibilityResult:
    feasible: bool
    X: Optional[np.ndarray]
    solution: SdpSolution


@lru_cache(maxsize=32)
def _upper(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


def svec(X: np.ndarray) -> np.ndarray:
    """Isometric real vector of a Hermitian matrix: <svec(A), svec(X)> = tr(A X)."""
    iu = _upper(X.shape[0])
    return np.concatenate(
        (np.real(np.diag(X)), SQRT2 * np.real(X[iu]), SQRT2 * np.imag(X[iu]))
    )


def smat(v: np.ndarray, n: int) -> np.ndarray:
    iu = _upper(n)
    m = len(iu[0])
    X = np.zeros((n, n), dtype=complex)
    X[np.diag_indices(n)] = v[:n]
    off = (v[n : n + m] + 1j * v[n + m : n + 2 * m]) / SQRT2
    X[iu] = off
    X[(iu[1], iu[0])] = np.conj(off)
    return X


def constraint_violations(problem: SdpProblem, X: np.ndarray, xi: float) -> np.ndarray:
    """Violation of every constraint, measured on rows scaled to unit norm."""
    out = np.zeros(len(problem.constraints))
    for j, con in enumerate(problem.constraints):
        a = svec(con.A)
        norm = np.sqrt(a @ a + con.xi_coeff**2)
        if norm == 0:
            norm = 1.0
        r = (float(np.real(np.vdot(con.A, X))) + con.xi_coeff * xi - con.rhs) / norm
        if con.sense is Sense.EQ:
            out[j] = abs(r)
        elif con.sense is Sense.LE:
            out[j] = max(r, 0.0)
        else:
            out[j] = max(-r, 0.0)
    return out


def dump_problem(problem: SdpProblem, path: str) -> None:
    """
    Write an SDP in a plain-text format for cross-checking with other solvers.

    Layout: a "dim n" line, an "objective c_xi" line followed by n rows of C
    (each entry written as "re im"), then "constraints m" and for every
    constraint a header "constraint j sense rhs xi_coeff" followed by the n
    rows of A_j. A missing C is written as zeros.
    """

    def rows(A: np.ndarray) -> List[str]:
        return [
            " ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) for row in A
        ]

    n = problem.dim
    C = problem.C if problem.C is not None else np.zeros((n, n), dtype=complex)
    lines = [f"dim {n}", f"objective {problem.c_xi:.17g}", *rows(C)]
    lines.append(f"constraints {len(problem.constraints)}")
    for j, con in enumerate(problem.constraints):
        lines.append(
            f"constraint {j} {con.sense.value} {con.rhs:.17g} {con.xi_coeff:.17g}"
        )
        lines.extend(rows(con.A))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class BudgetExhausted(Exception):
    """Raised by a back-end when an iteration budget runs out; carries the iterate."""

    def __init__(self, solution: SdpSolution):
        self.solution = solution
        super().__init__(f"budget exhausted after {solution.iterations} iterations")


class SdpSolver:
    def __init__(self, settings: Optional[SolverSettings] = None):
        """
        Initialize a solver back-end.

        Args:
            settings (SolverSettings): Tolerances, budget and debug dump location
        """
        self.settings = settings or SolverSettings()
        self.solve_count = 0

    def solve(
        self,
        problem: SdpProblem,
        x0: Optional[SdpSolution] = None,
        tol_feas: Optional[float] = None,
        tol_gap: Optional[float] = None,
        max_iters: Optional[int] = None,
    ) -> SdpSolution:
        """Solve one SDP; budget exhaustion and infeasibility are reported in the status."""
        self.solve_count += 1
        dump_dir = self.settings.dump_dir or os.getenv("RISIC_SDP_DUMP_DIR")
        if dump_dir:
            os.makedirs(dump_dir, exist_ok=True)
            dump_problem(
                problem, os.path.join(dump_dir, f"sdp_{id(self):x}_{self.solve_count:05d}.txt")
            )

        solution = self._solve_once(
            problem,
            x0,
            tol_feas or self.settings.tol_feas,
            tol_gap or self.settings.tol_gap,
            max_iters or self.settings.max_iters,
        )
        log = logging.warning if solution.status is Status.MAX_ITERS else logging.debug
        log(
            f"SDP n={problem.dim} m={len(problem.constraints)}: {solution.status.value} "
            f"after {solution.iterations} iterations "
            f"(primal {solution.primal_residual:.2e}, dual {solution.dual_residual:.2e}, "
            f"gap {solution.gap:.2e})"
        )
        return solution

    def feasibility(
        self, problem: SdpProblem, tol_feas: Optional[float] = None
    ) -> FeasibilityResult:
        """Find any X satisfying the constraints of a problem, ignoring its objective."""
        plain = SdpProblem(dim=problem.dim, constraints=list(problem.constraints))
        solution = self.solve(plain, tol_feas=tol_feas)
        tol = tol_feas or self.settings.tol_feas
        feasible = solution.status is not Status.INFEASIBLE and (
            solution.primal_residual <= tol
        )
        return FeasibilityResult(
            feasible=feasible, X=solution.X if feasible else None, solution=solution
        )

    def _solve_once(
        self,
        problem: SdpProblem,
        x0: Optional[SdpSolution],
        tol_feas: float,
        tol_gap: float,
        max_iters: int,
    ) -> SdpSolution:
        raise NotImplementedError

    def _with_restarts(self, attempt: Callable[[], SdpSolution]) -> SdpSolution:
        """Run attempt, resuming on BudgetExhausted up to settings.restarts times."""
        retrying = Retrying(
            stop=stop_after_attempt(self.settings.restarts + 1),
            retry=retry_if_exception_type(BudgetExhausted),
            before_sleep=before_sleep_log(logging.getLogger(__name__), logging.INFO),
            reraise=True,
        )
        try:
            return retrying(attempt)
        except BudgetExhausted as e:
            return e.solution
