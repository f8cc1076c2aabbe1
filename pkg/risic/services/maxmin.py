# src/risic/services/maxmin.py
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..channels import (
    CascadedChannels,
    ChannelSet,
    PhaseShift,
    PhiLike,
    as_vector,
    effective_bs_channels,
)
from ..config import AoConfig, Driver, InitMode, LinkBudget
from ..exceptions import DegenerateSolutionError, DimensionError, RisError, SolverError
from ..lift import (
    augment,
    build_device_lifts,
    build_user_lifts,
    hermitize,
    trace_product,
)
from ..scenario import Drop, child, rayleigh
from ..sinr import Combiner, evaluate, lmmse_combiner
from ..solver import Constraint, SdpProblem, SdpSolution, SdpSolver, Sense, Status

Evaluator = Callable[[np.ndarray], float]

DOMINANCE_RTOL = 1e-4
DOMINANCE_ATOL = 1e-9


@dataclass(frozen=True)
class Ratio:
    """tr(P X) / (tr(Q X) + const) over a lifted matrix X."""

    P: np.ndarray
    Q: np.ndarray
    const: float = 1.0

    def value(self, X: np.ndarray) -> float:
        return float(trace_product(X, self.P) / (trace_product(X, self.Q) + self.const))

    def parts(self, X: np.ndarray):
        return trace_product(X, self.P), trace_product(X, self.Q) + self.const


@dataclass
class DinkelbachResult:
    lam: float
    Phi: np.ndarray
    lambdas: List[float]
    values: List[float]
    converged: bool
    sdp_solves: int
    bound: float
    last: Optional[SdpSolution] = None


def link_ratios(
    ch: ChannelSet, casc: CascadedChannels, W: Combiner, budget: LinkBudget
) -> List[Ratio]:
    """
    Lifted SINR ratios of every link, devices first, divided through by the
    noise term so each denominator constant is 1.
    """
    users = build_user_lifts(ch, casc, W, budget)
    devices = build_device_lifts(ch, casc)
    ratios = []
    for l in range(budget.L):
        scale = budget.sigma2_dev
        signal = budget.p_dev[l] * devices.dd[l, l]
        total = np.tensordot(budget.p_dev, devices.dd[l], axes=1) + np.tensordot(
            budget.p_user, devices.ud[l], axes=1
        )
        ratios.append(Ratio(P=signal / scale, Q=(total - signal) / scale))
    for k in range(budget.K):
        scale = users.zeta[k]
        signal = budget.p_user[k] * users.ub[k, k]
        total = np.tensordot(budget.p_user, users.ub[k], axes=1) + np.tensordot(
            budget.p_dev, users.db[k], axes=1
        )
        ratios.append(Ratio(P=signal / scale, Q=(total - signal) / scale))
    return ratios


def unit_box_constraints(N: int) -> List[Constraint]:
    """X_nn <= 1 for the N phase entries and X_{N+1,N+1} = 1."""
    constraints = []
    for n in range(N + 1):
        E = np.zeros((N + 1, N + 1), dtype=complex)
        E[n, n] = 1.0
        if n < N:
            constraints.append(Constraint(A=E, sense=Sense.LE, rhs=1.0))
        else:
            constraints.append(Constraint(A=E, sense=Sense.EQ, rhs=1.0))
    return constraints


def min_ratio(ratios: Sequence[Ratio], X: np.ndarray) -> float:
    return min((r.value(X) for r in ratios), default=np.inf)


def parametric_problem(
    ratios: Sequence[Ratio],
    base: Sequence[Constraint],
    lam: float,
    weights: np.ndarray,
    dim: int,
    with_xi: bool = True,
) -> SdpProblem:
    """
    maximize xi s.t. (tr((P_i - lam Q_i) X) - lam c_i) / w_i >= xi.

    Without xi this is the feasibility problem of the SINR target lam.
    """
    constraints = list(base)
    for r, w in zip(ratios, weights):
        constraints.append(
            Constraint(
                A=hermitize(r.P - lam * r.Q) / w,
                sense=Sense.GE,
                rhs=lam * r.const / w,
                xi_coeff=-1.0 if with_xi else 0.0,
            )
        )
    return SdpProblem(dim=dim, constraints=constraints, c_xi=1.0 if with_xi else 0.0)


def _check(solution: SdpSolution, what: str) -> None:
    if solution.status in (Status.INFEASIBLE, Status.NUMERICAL_TROUBLE):
        raise SolverError(f"{what}: SDP returned {solution.status.value}")
    if solution.status is Status.MAX_ITERS:
        logging.warning(
            f"{what}: SDP stopped at its iteration budget "
            f"(primal residual {solution.primal_residual:.2e})"
        )


def ratio_weights(ratios: Sequence[Ratio], X: Optional[np.ndarray]) -> np.ndarray:
    """Denominators at X, floored at 1; all ones without a point."""
    if X is None:
        return np.ones(len(ratios))
    return np.array([max(r.parts(X)[1], 1.0) for r in ratios])


def dinkelbach_maxmin(
    ratios: Sequence[Ratio],
    base: Sequence[Constraint],
    dim: int,
    solver: SdpSolver,
    tol: float = 1e-3,
    max_iters: int = 20,
    X0: Optional[np.ndarray] = None,
    warm: Optional[SdpSolution] = None,
    tol_feas: Optional[float] = None,
    tol_gap: Optional[float] = None,
) -> DinkelbachResult:
    """
    Generalized Dinkelbach iteration for max_X min_i N_i(X) / D_i(X).

    Each step solves F(lam) = max_X min_i (N_i - lam D_i) / w_i as an SDP in
    (X, xi) and updates lam to the smallest ratio at the maximizer. Stops once
    F(lam) <= tol * max(1, lam). The weights w_i are the denominators at the
    current iterate (X0, then each maximizer), recomputed before every solve.

    Args:
        ratios: Lifted ratios N_i / D_i
        base: Constraints on X shared by every subproblem
        dim: Side of X
        solver: SDP back-end
        tol: Relative stopping tolerance on F(lam)
        max_iters: Maximum number of parametric solves
        X0: Feasible starting point; lam starts at its min ratio (0 without one)
        warm: Solution to start the first parametric solve from
        tol_feas: Feasibility tolerance of the parametric solves (solver default if None)
        tol_gap: Gap tolerance of the parametric solves (solver default if None)
    """
    if not ratios:
        raise DimensionError("No SINR ratios to maximize")
    lam = max(min_ratio(ratios, X0), 0.0) if X0 is not None else 0.0
    best_Phi = X0
    current = X0
    lambdas: List[float] = [lam]
    values: List[float] = []
    solves_before = solver.solve_count
    converged = False
    solved_at = lam

    for t in range(max_iters):
        solved_at = lam
        weights = ratio_weights(ratios, current)
        problem = parametric_problem(ratios, base, lam, weights, dim)
        solution = solver.solve(problem, x0=warm, tol_feas=tol_feas, tol_gap=tol_gap)
        _check(solution, f"Dinkelbach step {t}")
        warm = solution
        F = solution.xi
        values.append(F)
        logging.debug(f"Dinkelbach step {t}: lam={lam:.6g} F={F:.3e}")

        candidate = min_ratio(ratios, solution.X)
        if best_Phi is None or candidate >= lam:
            best_Phi = solution.X
        if F <= tol * max(1.0, lam):
            converged = True
            break
        if candidate <= lam:
            # no progress left within solver accuracy
            converged = True
            break
        lam = candidate
        current = solution.X
        lambdas.append(lam)

    # any lam' and weights w >= 1 give lam' + max(F(lam'), 0) * max_i w_i >= optimum
    bound = max(lam, solved_at + max(values[-1], 0.0) * float(np.max(weights)))
    if not converged:
        logging.warning(f"Dinkelbach stopped after {max_iters} steps at lam={lam:.6g}")
    return DinkelbachResult(
        lam=lam,
        Phi=best_Phi,
        lambdas=lambdas,
        values=values,
        converged=converged,
        sdp_solves=solver.solve_count - solves_before,
        bound=bound,
        last=warm,
    )


def bisection_maxmin(
    ratios: Sequence[Ratio],
    base: Sequence[Constraint],
    dim: int,
    solver: SdpSolver,
    tol: float = 1e-3,
    max_iters: int = 20,
    X0: Optional[np.ndarray] = None,
    warm: Optional[SdpSolution] = None,
    tol_feas: Optional[float] = None,
    tol_gap: Optional[float] = None,
) -> DinkelbachResult:
    """
    Bisection on the common SINR target, same contract as dinkelbach_maxmin.

    The bracket is [lam0, lam0 + F(lam0) max w], from one parametric solve at
    the starting value; each further step is a feasibility problem.
    """
    if not ratios:
        raise DimensionError("No SINR ratios to maximize")
    weights = ratio_weights(ratios, X0)
    lo = max(min_ratio(ratios, X0), 0.0) if X0 is not None else 0.0
    solves_before = solver.solve_count

    first = solver.solve(
        parametric_problem(ratios, base, lo, weights, dim),
        x0=warm,
        tol_feas=tol_feas,
        tol_gap=tol_gap,
    )
    _check(first, "Bisection bracket")
    best_Phi = first.X
    lo = max(lo, min_ratio(ratios, first.X))
    hi = lo + max(first.xi, 0.0) * float(np.max(weights))
    lambdas, values = [lo], [first.xi]

    for t in range(max_iters):
        if hi - lo <= tol * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        feasibility = solver.feasibility(
            parametric_problem(ratios, base, mid, weights, dim, with_xi=False),
            tol_feas=tol_feas,
        )
        logging.debug(f"Bisection step {t}: [{lo:.6g}, {hi:.6g}] mid feasible={feasibility.feasible}")
        if feasibility.feasible:
            best_Phi = feasibility.X
            lo = max(mid, min_ratio(ratios, feasibility.X))
        else:
            hi = mid
        lambdas.append(lo)
        values.append(hi - lo)

    return DinkelbachResult(
        lam=lo,
        Phi=best_Phi,
        lambdas=lambdas,
        values=values,
        converged=hi - lo <= tol * max(1.0, lo),
        sdp_solves=solver.solve_count - solves_before,
        bound=max(hi, lo),
        last=first,
    )


def recover_candidate(v: np.ndarray) -> Optional[np.ndarray]:
    """Normalize [phi; t] by t and clip entries outside the unit disk to their phase."""
    if abs(v[-1]) < 1e-300:
        return None
    phi = v[:-1] / v[-1]
    mag = np.abs(phi)
    return np.where(mag > 1.0, np.exp(1j * np.angle(phi)), phi)


def gaussian_randomize(
    Phi: np.ndarray,
    evaluator: Evaluator,
    num: int,
    seq: np.random.SeedSequence,
    workers: int = 1,
) -> PhaseShift:
    """
    Recover a feasible phase vector from a lifted solution.

    Candidate 0 comes from the principal eigenvector; candidate i >= 1 is
    U diag(sqrt(w)) r_i with r_i ~ CN(0, I) drawn from child(seq, i), so the
    candidate set for num = I is a prefix of the set for any larger num.
    The best candidate by evaluator wins, ties going to the lowest index.
    """
    n = Phi.shape[0]
    if np.real(Phi[n - 1, n - 1]) < 1e-6:
        raise DegenerateSolutionError(
            f"Lifted solution anchor entry is {np.real(Phi[n - 1, n - 1]):.3e}"
        )
    w, U = np.linalg.eigh(hermitize(Phi))
    w = np.maximum(w, 0.0)
    root = U * np.sqrt(w)

    def candidate(i: int) -> Optional[np.ndarray]:
        if i == 0:
            return recover_candidate(root[:, -1])
        r = rayleigh(np.random.default_rng(child(seq, i)), (n,))
        return recover_candidate(root @ r)

    def score(i: int) -> float:
        phi = candidate(i)
        return -np.inf if phi is None else float(evaluator(phi))

    indices = range(num + 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(score, indices))
    else:
        scores = [score(i) for i in indices]

    best = int(np.argmax(scores))
    phi = candidate(best)
    if phi is None:
        raise DegenerateSolutionError("No randomization candidate could be normalized")
    logging.debug(f"Randomization picked candidate {best} of {num + 1} ({scores[best]:.4g})")
    return PhaseShift(phi)


def dominance_rtol(ao: AoConfig) -> float:
    """Relative slack of the relaxation bound at the phi-step solve accuracy."""
    return max(DOMINANCE_RTOL, 10.0 * ao.sdp_tol_gap)


def fixed_combiner_evaluator(
    budget: LinkBudget, ch: ChannelSet, casc: CascadedChannels, W: Combiner
) -> Evaluator:
    def min_sinr(phi: np.ndarray) -> float:
        return evaluate(budget, ch, casc, phi, W).min_sinr

    return min_sinr


@dataclass
class PhiStep:
    phi: PhaseShift
    Phi: np.ndarray
    value: float
    driver: DinkelbachResult
    kept_incumbent: bool

    @property
    def bound(self) -> float:
        return self.driver.bound


def phi_step(
    budget: LinkBudget,
    ch: ChannelSet,
    casc: CascadedChannels,
    W: Combiner,
    ao: AoConfig,
    solver: SdpSolver,
    seq: np.random.SeedSequence,
    incumbent: Optional[PhiLike] = None,
    warm: Optional[SdpSolution] = None,
) -> PhiStep:
    """
    Optimize phi for a fixed combiner: SDR solved by the configured driver,
    then Gaussian randomization. The incumbent is kept when it scores higher.

    The parametric SDPs run at ao.sdp_tol_feas and ao.sdp_tol_gap, starting
    from warm when given (the last solve of the previous outer iteration).
    """
    N = ch.dims[3]
    ratios = link_ratios(ch, casc, W, budget)
    base = unit_box_constraints(N)
    evaluator = fixed_combiner_evaluator(budget, ch, casc, W)
    X0 = augment(as_vector(incumbent)) if incumbent is not None else None

    drive = bisection_maxmin if ao.driver is Driver.BISECTION else dinkelbach_maxmin
    result = drive(
        ratios,
        base,
        N + 1,
        solver,
        tol=ao.dinkelbach_tol,
        max_iters=ao.dinkelbach_max_iters,
        X0=X0,
        warm=warm,
        tol_feas=ao.sdp_tol_feas,
        tol_gap=ao.sdp_tol_gap,
    )
    phi = gaussian_randomize(
        result.Phi, evaluator, ao.num_randomizations, seq, workers=ao.workers
    )
    value = evaluator(phi.phi)

    kept = False
    if incumbent is not None:
        incumbent_value = evaluator(as_vector(incumbent))
        if incumbent_value >= value:
            if incumbent_value > value:
                logging.info(
                    f"Randomization ({value:.4g}) below incumbent ({incumbent_value:.4g}); keeping incumbent"
                )
            phi, value, kept = PhaseShift(as_vector(incumbent)), incumbent_value, True

    if value > result.bound * (1.0 + dominance_rtol(ao)) + DOMINANCE_ATOL:
        logging.warning(
            f"Recovered min-SINR {value:.6g} exceeds relaxation bound {result.bound:.6g}"
        )
    return PhiStep(phi=phi, Phi=result.Phi, value=value, driver=result, kept_incumbent=kept)


@dataclass
class AoTrace:
    """Per outer iteration: LMMSE min-SINR (linear), phi, relaxation bound, SDP solves and phase times."""

    initial_min_sinr: float = float("nan")
    min_sinr: List[float] = field(default_factory=list)
    phis: List[np.ndarray] = field(default_factory=list)
    bounds: List[float] = field(default_factory=list)
    sdp_solves: List[int] = field(default_factory=list)
    kept_incumbent: List[bool] = field(default_factory=list)
    combiner_ms: List[float] = field(default_factory=list)
    phi_step_ms: List[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.min_sinr)

    @property
    def total_sdp_solves(self) -> int:
        return int(sum(self.sdp_solves))

    def to_dict(self) -> dict:
        return {
            "initial_min_sinr": self.initial_min_sinr,
            "min_sinr": list(self.min_sinr),
            "phis": [[[z.real, z.imag] for z in phi] for phi in self.phis],
            "bounds": list(self.bounds),
            "sdp_solves": list(self.sdp_solves),
            "kept_incumbent": list(self.kept_incumbent),
            "combiner_ms": list(self.combiner_ms),
            "phi_step_ms": list(self.phi_step_ms),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "AoTrace":
        values = dict(data)
        values["phis"] = [
            np.array([complex(re, im) for re, im in phi]) for phi in data.get("phis", [])
        ]
        return cls(**values)


@dataclass
class AoResult:
    phi: PhaseShift
    W: Combiner
    trace: AoTrace


def initial_phi(N: int, ao: AoConfig, seq: np.random.SeedSequence) -> PhaseShift:
    if ao.init is InitMode.GIVEN:
        phi = PhaseShift(ao.initial_phi)
        if len(phi) != N:
            raise DimensionError(f"initial_phi has length {len(phi)}, expected {N}")
        return phi
    if ao.init is InitMode.ZERO:
        return PhaseShift.zeros(N)
    return PhaseShift.random(N, np.random.default_rng(child(seq, 0)))


def _lmmse(budget: LinkBudget, ch: ChannelSet, casc: CascadedChannels, phi: PhiLike) -> Combiner:
    F_UB, F_DB = effective_bs_channels(ch, casc, phi)
    return lmmse_combiner(budget, F_UB, F_DB)


def run_ao(
    budget: LinkBudget,
    ch: ChannelSet,
    casc: CascadedChannels,
    ao: AoConfig,
    solver: SdpSolver,
    seq: np.random.SeedSequence,
) -> AoResult:
    """
    Alternate LMMSE combiner updates with phi-steps.

    Stops when the relative min-SINR improvement of an outer iteration drops
    below ao.outer_tol, or after ao.max_outer_iters iterations.
    """
    phi = initial_phi(ch.dims[3], ao, seq)
    previous = evaluate(budget, ch, casc, phi).min_sinr
    trace = AoTrace(initial_min_sinr=previous)
    warm: Optional[SdpSolution] = None

    for t in range(ao.max_outer_iters):
        start = time.perf_counter()
        W = _lmmse(budget, ch, casc, phi)
        combined = time.perf_counter()
        solves_before = solver.solve_count
        try:
            step = phi_step(
                budget, ch, casc, W, ao, solver, child(seq, 1, t), incumbent=phi, warm=warm
            )
        except RisError as e:
            raise SolverError(f"AO phi-step failed at outer iteration {t}", e) from e
        stepped = time.perf_counter()

        phi = step.phi
        warm = step.driver.last
        current = evaluate(budget, ch, casc, phi).min_sinr
        trace.min_sinr.append(current)
        trace.phis.append(phi.phi.copy())
        trace.bounds.append(step.bound)
        trace.sdp_solves.append(solver.solve_count - solves_before)
        trace.kept_incumbent.append(step.kept_incumbent)
        trace.combiner_ms.append(1e3 * (combined - start))
        trace.phi_step_ms.append(1e3 * (stepped - combined))
        logging.info(f"AO iteration {t}: min-SINR {current:.6g} (bound {step.bound:.6g})")

        improvement = (current - previous) / max(abs(previous), np.finfo(float).tiny)
        previous = current
        if improvement < ao.outer_tol:
            break

    return AoResult(phi=phi, W=_lmmse(budget, ch, casc, phi), trace=trace)


class AlternatingOptimizer:
    def __init__(self, solver: SdpSolver, ao: Optional[AoConfig] = None):
        """
        Initialize the AO service.

        Args:
            solver (SdpSolver): Back-end used for every phi-step
            ao (AoConfig): Iteration limits, tolerances and initialization
        """
        self.solver = solver
        self.ao = ao or AoConfig()

    def optimize(
        self,
        drop: Drop,
        seq: Optional[np.random.SeedSequence] = None,
        initial: Optional[PhiLike] = None,
        **overrides,
    ) -> AoResult:
        """Run AO on a drop, optionally from a given phi (IC-AO uses the IC solution)."""
        ao = self.ao.replace(**overrides) if overrides else self.ao
        if initial is not None:
            ao = ao.replace(init=InitMode.GIVEN, initial_phi=as_vector(initial))
        seq = seq or np.random.SeedSequence(drop.cfg.seed)
        return run_ao(drop.budget, drop.channels, drop.cascaded, ao, self.solver, seq)
