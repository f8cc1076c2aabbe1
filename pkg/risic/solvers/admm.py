# src/risic/solvers/admm.py
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import pinvh

from ..solver import (
    BudgetExhausted,
    Constraint,
    SdpProblem,
    SdpSolution,
    SdpSolver,
    Sense,
    Status,
    smat,
    svec,
)


@dataclass
class _ScaledProblem:
    """
    Standard form over z = [svec(X), xi, s]: maximize c^T z s.t. E z = b, z in K.

    Inequality rows carry a slack s >= 0 (+s for <=, -s for >=). Every row of
    [A_j, xi_coeff] is scaled to unit norm and c to unit norm.
    """

    n: int
    E: np.ndarray
    b: np.ndarray
    c: np.ndarray
    c_norm: float
    gram_pinv: np.ndarray
    inconsistent: bool

    @property
    def p(self) -> int:
        return self.n * self.n

    @classmethod
    def build(cls, problem: SdpProblem) -> "_ScaledProblem":
        n = problem.dim
        p = n * n
        rows, rhs, signs = [], [], []
        inconsistent = False
        for con in problem.constraints:
            a = np.append(svec(con.A), con.xi_coeff)
            norm = np.linalg.norm(a)
            if norm == 0.0:
                # 0 (sense) rhs
                inconsistent |= not _trivially_holds(con)
                continue
            rows.append(a / norm)
            rhs.append(con.rhs / norm)
            signs.append(
                {Sense.LE: 1.0, Sense.EQ: 0.0, Sense.GE: -1.0}[con.sense]
            )

        m = len(rows)
        ineq = [j for j, s in enumerate(signs) if s != 0.0]
        E = np.zeros((m, p + 1 + len(ineq)))
        if m:
            E[:, : p + 1] = np.array(rows)
        for col, j in enumerate(ineq):
            E[j, p + 1 + col] = signs[j]
        b = np.array(rhs, dtype=float)

        c = np.zeros(E.shape[1])
        if problem.C is not None:
            c[:p] = svec(problem.C)
        c[p] = problem.c_xi
        c_norm = float(np.linalg.norm(c))
        if c_norm > 0:
            c = c / c_norm

        gram_pinv = pinvh(E @ E.T) if m else np.zeros((0, 0))
        if m and not inconsistent:
            z0 = E.T @ (gram_pinv @ b)
            inconsistent = bool(
                np.linalg.norm(E @ z0 - b) > 1e-9 * (1.0 + np.linalg.norm(b))
            )
        return cls(n, E, b, c, c_norm, gram_pinv, inconsistent)

    def project_affine(self, v: np.ndarray) -> np.ndarray:
        if not len(self.b):
            return v
        return v - self.E.T @ (self.gram_pinv @ (self.E @ v - self.b))

    def project_cone(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        X = smat(v[: self.p], self.n)
        w, U = np.linalg.eigh(X)
        out[: self.p] = svec((U * np.maximum(w, 0.0)) @ U.conj().T)
        out[self.p + 1 :] = np.maximum(v[self.p + 1 :], 0.0)
        return out

    def dual_cone_distance(self, s: np.ndarray) -> float:
        """Distance of s from the dual cone (PSD part, xi free so zero, slacks >= 0)."""
        w = np.linalg.eigvalsh(smat(s[: self.p], self.n))
        parts = (
            np.linalg.norm(np.minimum(w, 0.0)),
            abs(s[self.p]),
            np.linalg.norm(np.minimum(s[self.p + 1 :], 0.0)),
        )
        return float(np.sqrt(sum(x * x for x in parts)))

    def certifies_infeasibility(self, step: np.ndarray, tol: float = 1e-3) -> bool:
        """
        Whether the growth direction of the multiplier is a Farkas certificate:
        d in range(E^T), -d in the dual cone and b^T (E E^T)^+ E d > 0.
        """
        norm = np.linalg.norm(step)
        if norm == 0.0 or not len(self.b):
            return False
        d = step / norm
        coeffs = self.gram_pinv @ (self.E @ d)
        if np.linalg.norm(d - self.E.T @ coeffs) > tol:
            return False
        if self.dual_cone_distance(-d) > tol:
            return False
        return bool(self.b @ coeffs > tol * tol)

    def primal_residual(self, z: np.ndarray) -> float:
        if not len(self.b):
            return 0.0
        r = self.E[:, : self.p + 1] @ z[: self.p + 1] - self.b
        signs = self.E[:, self.p + 1 :].sum(axis=1)
        viol = np.where(
            signs > 0, np.maximum(r, 0.0), np.where(signs < 0, np.maximum(-r, 0.0), np.abs(r))
        )
        return float(np.max(viol))

    def warm_start(self, x0: SdpSolution) -> np.ndarray:
        z = np.zeros(self.E.shape[1])
        if x0.X.shape != (self.n, self.n):
            return z
        z[: self.p] = svec(x0.X)
        z[self.p] = x0.xi
        if len(self.b):
            r = self.b - self.E[:, : self.p + 1] @ z[: self.p + 1]
            signs = self.E[:, self.p + 1 :].sum(axis=1)
            z[self.p + 1 :] = np.maximum(signs * r, 0.0)[signs != 0]
        return z


def _trivially_holds(con: Constraint) -> bool:
    if con.sense is Sense.EQ:
        return con.rhs == 0.0
    if con.sense is Sense.LE:
        return 0.0 <= con.rhs
    return 0.0 >= con.rhs


@dataclass
class _State:
    y: np.ndarray
    u: np.ndarray
    rho: float = 1.0
    iterations: int = 0
    best_primal: float = np.inf
    stalled: int = 0
    multiplier: Optional[np.ndarray] = None
    primal: float = np.inf
    dual: float = np.inf
    gap: float = np.inf


class AdmmSolver(SdpSolver):
    """
    Over-relaxed ADMM on the scaled standard form, alternating a projection on
    the affine constraint set with a projection on the PSD cone.

    Deterministic: the iteration and penalty schedule depend only on the input.
    """

    relaxation = 1.6
    check_every = 10
    adapt_every = 100
    stall_window = 500

    def _solve_once(
        self,
        problem: SdpProblem,
        x0: Optional[SdpSolution],
        tol_feas: float,
        tol_gap: float,
        max_iters: int,
    ) -> SdpSolution:
        data = _ScaledProblem.build(problem)
        if data.inconsistent:
            n = problem.dim
            return SdpSolution(
                X=np.zeros((n, n), dtype=complex),
                xi=0.0,
                status=Status.INFEASIBLE,
                primal_residual=np.inf,
                dual_residual=np.inf,
                gap=np.inf,
            )

        d = data.E.shape[1]
        y0 = data.warm_start(x0) if x0 is not None else np.zeros(d)
        state = _State(y=data.project_cone(y0), u=np.zeros(d))
        if x0 is not None and x0.multiplier is not None and x0.multiplier.shape == (d,):
            state.rho = x0.rho
            state.u = x0.multiplier / x0.rho

        def attempt() -> SdpSolution:
            state.stalled = 0
            state.best_primal = np.inf
            return self._iterate(problem, data, state, tol_feas, tol_gap, max_iters)

        return self._with_restarts(attempt)

    def _iterate(
        self,
        problem: SdpProblem,
        data: _ScaledProblem,
        state: _State,
        tol_feas: float,
        tol_gap: float,
        max_iters: int,
    ) -> SdpSolution:
        alpha = self.relaxation
        has_objective = data.c_norm > 0
        try:
            for _ in range(max_iters):
                z = data.project_affine(state.y - state.u + data.c / state.rho)
                z_hat = alpha * z + (1.0 - alpha) * state.y
                y_prev = state.y
                state.y = data.project_cone(z_hat + state.u)
                state.u = state.u + z_hat - state.y
                state.iterations += 1

                if not np.all(np.isfinite(state.y)):
                    return self._solution(problem, data, state, Status.NUMERICAL_TROUBLE)
                if state.iterations % self.check_every:
                    continue

                self._measure(data, state, has_objective)
                if state.primal <= tol_feas and (
                    not has_objective or (state.dual <= tol_gap and state.gap <= tol_gap)
                ):
                    return self._solution(problem, data, state, Status.OPTIMAL)
                if self._diverging(data, state, tol_feas):
                    return self._solution(problem, data, state, Status.INFEASIBLE)
                if state.iterations % self.adapt_every == 0:
                    self._rebalance(state, z, y_prev)
        except np.linalg.LinAlgError as e:
            logging.error(f"ADMM eigendecomposition failed: {e}")
            return self._solution(problem, data, state, Status.NUMERICAL_TROUBLE)

        self._rebalance(state, z, y_prev)
        raise BudgetExhausted(self._solution(problem, data, state, Status.MAX_ITERS))

    @staticmethod
    def _measure(data: _ScaledProblem, state: _State, has_objective: bool) -> None:
        state.primal = data.primal_residual(state.y)
        if not has_objective:
            state.dual = state.gap = 0.0
            return
        # dual multiplier of the cone split is rho * u
        target = data.c - state.rho * state.u
        nu = data.gram_pinv @ (data.E @ target) if len(data.b) else np.zeros(0)
        s = data.E.T @ nu - data.c
        state.dual = data.dual_cone_distance(s)
        pobj = float(data.c @ state.y)
        dobj = float(data.b @ nu)
        state.gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))

    def _diverging(self, data: _ScaledProblem, state: _State, tol_feas: float) -> bool:
        """Primal residual stuck above 1e3 * tol_feas with a Farkas certificate in the multiplier growth."""
        # rho * u is unchanged by _rebalance
        multiplier = state.rho * state.u
        step = multiplier - state.multiplier if state.multiplier is not None else multiplier
        state.multiplier = multiplier
        if state.primal <= 1e3 * tol_feas or state.primal < 0.9 * state.best_primal:
            state.best_primal = min(state.best_primal, state.primal)
            state.stalled = 0
            return False
        state.stalled += self.check_every
        if state.stalled < self.stall_window:
            return False
        state.stalled = 0
        return data.certifies_infeasibility(step)

    @staticmethod
    def _rebalance(state: _State, z: np.ndarray, y_prev: np.ndarray) -> None:
        r_primal = np.linalg.norm(z - state.y)
        r_dual = state.rho * np.linalg.norm(state.y - y_prev)
        if r_primal > 10.0 * r_dual and state.rho < 1e6:
            state.rho *= 2.0
            state.u /= 2.0
        elif r_dual > 10.0 * r_primal and state.rho > 1e-6:
            state.rho /= 2.0
            state.u *= 2.0

    @staticmethod
    def _solution(
        problem: SdpProblem, data: _ScaledProblem, state: _State, status: Status
    ) -> SdpSolution:
        X = smat(state.y[: data.p], data.n)
        xi = float(state.y[data.p])
        return SdpSolution(
            X=X,
            xi=xi,
            status=status,
            primal_residual=float(state.primal),
            dual_residual=float(state.dual),
            gap=float(state.gap),
            iterations=state.iterations,
            objective=problem.objective(X, xi),
            multiplier=state.rho * state.u,
            rho=state.rho,
        )
