# src/risic/solvers/conic.py
import logging
from typing import Optional

import numpy as np

from ..exceptions import SolverError
from ..solver import (
    SdpProblem,
    SdpSolution,
    SdpSolver,
    Sense,
    Status,
    constraint_violations,
)

_STATUS = {
    "optimal": Status.OPTIMAL,
    "optimal_inaccurate": Status.MAX_ITERS,
    "infeasible": Status.INFEASIBLE,
    "infeasible_inaccurate": Status.INFEASIBLE,
    "unbounded": Status.NUMERICAL_TROUBLE,
    "unbounded_inaccurate": Status.NUMERICAL_TROUBLE,
    "user_limit": Status.MAX_ITERS,
}


class CvxpySolver(SdpSolver):
    """SdpProblem solved through cvxpy (SCS by default); needs the `conic` extra."""

    solver_name = "SCS"

    def _solve_once(
        self,
        problem: SdpProblem,
        x0: Optional[SdpSolution],
        tol_feas: float,
        tol_gap: float,
        max_iters: int,
    ) -> SdpSolution:
        try:
            import cvxpy as cp
        except ImportError as e:
            raise SolverError("The cvxpy back-end needs the 'conic' extra", e)

        n = problem.dim
        X = cp.Variable((n, n), hermitian=True)
        xi = cp.Variable()
        constraints = [X >> 0]
        for con in problem.constraints:
            lhs = cp.real(cp.trace(con.A @ X)) + con.xi_coeff * xi
            if con.sense is Sense.EQ:
                constraints.append(lhs == con.rhs)
            elif con.sense is Sense.LE:
                constraints.append(lhs <= con.rhs)
            else:
                constraints.append(lhs >= con.rhs)

        objective = problem.c_xi * xi
        if problem.C is not None:
            objective = objective + cp.real(cp.trace(problem.C @ X))
        cvx_problem = cp.Problem(cp.Maximize(objective), constraints)

        try:
            cvx_problem.solve(
                solver=self.solver_name, eps=min(tol_feas, tol_gap), max_iters=max_iters
            )
        except cp.error.SolverError as e:
            logging.error(f"cvxpy failed on SDP of size {n}: {e}")
            return SdpSolution(
                X=np.zeros((n, n), dtype=complex),
                xi=0.0,
                status=Status.NUMERICAL_TROUBLE,
                primal_residual=np.inf,
                dual_residual=np.inf,
                gap=np.inf,
            )

        status = _STATUS.get(cvx_problem.status, Status.NUMERICAL_TROUBLE)
        if X.value is None:
            X_val = np.zeros((n, n), dtype=complex)
            xi_val = 0.0
        else:
            X_val = 0.5 * (X.value + X.value.conj().T)
            w, U = np.linalg.eigh(X_val)
            X_val = (U * np.maximum(w, 0.0)) @ U.conj().T
            xi_val = float(xi.value) if xi.value is not None else 0.0

        violations = constraint_violations(problem, X_val, xi_val)
        primal = float(np.max(violations)) if violations.size else 0.0
        if status is Status.OPTIMAL and primal > tol_feas:
            status = Status.MAX_ITERS
        stats = cvx_problem.solver_stats
        return SdpSolution(
            X=X_val,
            xi=xi_val,
            status=status,
            primal_residual=primal,
            dual_residual=0.0,
            gap=0.0,
            iterations=int(getattr(stats, "num_iters", 0) or 0),
            objective=problem.objective(X_val, xi_val),
        )
