# src/risic/services/ic.py
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..channels import CascadedChannels, ChannelSet, PhaseShift, effective_bs_channels
from ..config import LinkBudget
from ..exceptions import (
    IcInfeasibleError,
    IcUnavailableError,
    IllConditionedError,
    SolverError,
    UnderdeterminedError,
    UnsupportedError,
)
from ..lift import lift_pair
from ..scenario import Drop, child, rayleigh
from ..sinr import Combiner, SinrReport, evaluate, lmmse_combiner
from ..solver import Constraint, SdpProblem, SdpSolver, Sense, Status

COND_LIMIT = 1e12
IDENTITY_TOL = 1e-8
BACKTRACK_STEPS = 10
MARGIN_FACTOR = 10.0


@dataclass(frozen=True)
class StackedChannels:
    """
    Device-side channels stacked as h + A phi.

    Rows of A are ordered [sig; itf; UD]: the L diagonal entries of F_DD,
    the L(L-1) off-diagonal entries row-major, then F_UD row-major over (l, k).
    perm lists, for the sig block followed by the itf block, the index of
    each entry in F_DD.ravel() (row-major, i.e. vec of the transpose).
    """

    A: np.ndarray
    h_sig: np.ndarray
    h_itf: np.ndarray
    h_UD: np.ndarray
    perm: np.ndarray
    L: int
    K: int

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def h(self) -> np.ndarray:
        return np.concatenate((self.h_sig, self.h_itf, self.h_UD))

    def split(self, f_dd: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(sig, itf) blocks of a row-major vec of F_DD."""
        permuted = np.asarray(f_dd)[self.perm]
        return permuted[: self.L], permuted[self.L :]

    def merge(self, sig: np.ndarray, itf: np.ndarray) -> np.ndarray:
        """Inverse of split."""
        out = np.empty(self.L * self.L, dtype=complex)
        out[self.perm] = np.concatenate((sig, itf))
        return out


def _dd_indices(L: int) -> Tuple[np.ndarray, np.ndarray]:
    sig = np.array([l * L + l for l in range(L)], dtype=int)
    itf = np.array([a * L + b for a in range(L) for b in range(L) if a != b], dtype=int)
    return sig, itf


def stack(ch: ChannelSet, casc: CascadedChannels) -> StackedChannels:
    M, K, L, N = ch.dims
    sig, itf = _dd_indices(L)
    rows_dd = np.conj(casc.g_DD).reshape(L * L, N)
    rows_ud = np.conj(casc.g_UD).reshape(L * K, N)
    h_dd = ch.H_DD.ravel()
    return StackedChannels(
        A=np.vstack((rows_dd[sig], rows_dd[itf], rows_ud)).reshape(L * (K + L), N),
        h_sig=h_dd[sig],
        h_itf=h_dd[itf],
        h_UD=ch.H_UD.ravel(),
        perm=np.concatenate((sig, itf)),
        L=L,
        K=K,
    )


def _right_inverse(A: np.ndarray) -> np.ndarray:
    """A^H (A A^H)^-1, guarded by the condition number of A A^H."""
    rows, N = A.shape
    if N < rows:
        raise UnderdeterminedError(
            f"Interference cancellation needs N >= {rows} RIS elements, got N={N}"
        )
    gram = A @ A.conj().T
    gram = 0.5 * (gram + gram.conj().T)
    cond = np.linalg.cond(gram)
    if not cond <= COND_LIMIT:
        raise IllConditionedError(f"cond(A A^H) = {cond:.3e} exceeds {COND_LIMIT:.0e}")
    try:
        factor = cho_factor(gram, lower=True)
    except LinAlgError as e:
        raise IllConditionedError("A A^H is not positive definite", e)
    pinv = A.conj().T @ cho_solve(factor, np.eye(rows))
    residual = np.max(np.abs(A @ pinv - np.eye(rows)))
    if residual > IDENTITY_TOL:
        raise IllConditionedError(f"A [B, C] deviates from identity by {residual:.3e}")
    return pinv


@dataclass(frozen=True)
class IcRepresentation:
    """phi = B f_sig + d, with [B, C] the right inverse of A; C is absent on the limited-feedback route."""

    B: np.ndarray
    d: np.ndarray
    C: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.B.shape[0]

    @property
    def L(self) -> int:
        return self.B.shape[1]

    @classmethod
    def from_feedback(cls, b: np.ndarray, d: np.ndarray) -> "IcRepresentation":
        return cls(B=np.asarray(b, dtype=complex).reshape(-1, 1), d=np.asarray(d, dtype=complex))


def build_representation(st: StackedChannels) -> IcRepresentation:
    if st.L < 1:
        raise IcUnavailableError("Interference cancellation needs at least one D2D pair")
    pinv = _right_inverse(st.A)
    B = pinv[:, : st.L]
    C = pinv[:, st.L :]
    d = -B @ st.h_sig - C @ np.concatenate((st.h_itf, st.h_UD))
    return IcRepresentation(B=B, d=d, C=C)


def phi_ic(rep: IcRepresentation, f_sig: np.ndarray) -> PhaseShift:
    """phi = B f_sig + d; not necessarily inside the unit disk."""
    return PhaseShift(rep.B @ np.asarray(f_sig, dtype=complex) + rep.d)


@dataclass(frozen=True)
class IcProblemData:
    """Z_k = G_UB_k B, q_k = h_UB_k + G_UB_k d and their lifts Omega_k, Upsilon_i."""

    Z: np.ndarray
    q: np.ndarray
    Omega: np.ndarray
    Upsilon: np.ndarray


def ic_problem_data(
    ch: ChannelSet, casc: CascadedChannels, rep: IcRepresentation, scale: float = 1.0
) -> IcProblemData:
    """
    Data of the transformed IC problem. With scale s the lifts are written
    for the variable f / s.
    """
    Z = np.einsum("kmn,nl->kml", casc.G_UB, rep.B)
    q = ch.H_UB.T + np.einsum("kmn,n->km", casc.G_UB, rep.d)
    # ||Z_k f + q_k||^2 = sum_m |conj(Z_k[m])^H f + q_km|^2
    Omega = lift_pair(scale * np.conj(Z), q).sum(axis=1)
    Upsilon = lift_pair(scale * np.conj(rep.B), rep.d)
    return IcProblemData(Z=Z, q=q, Omega=Omega, Upsilon=Upsilon)


def transformed_objective(
    data: IcProblemData, budget: LinkBudget, f_sig: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cauchy-Schwarz user SINR bounds p_k ||Z_k f + q_k||^2 / sigma2_B and the
    interference-free device SNRs p_l |f_l|^2 / sigma2_D.
    """
    f = np.asarray(f_sig, dtype=complex)
    user = budget.p_user * np.sum(np.abs(data.Z @ f + data.q) ** 2, axis=1) / budget.sigma2_bs
    device = budget.p_dev * np.abs(f) ** 2 / budget.sigma2_dev
    return user, device


@dataclass
class IcResult:
    phi: PhaseShift
    W: Combiner
    f_sig: np.ndarray
    relaxation: float
    report: SinrReport
    sdp_solves: int

    @property
    def min_sinr(self) -> float:
        return self.report.min_sinr


def _relaxed_problem(
    data: IcProblemData, budget: LinkBudget, scale: float, tol_feas: float
) -> Tuple[SdpProblem, float]:
    """SDR of the transformed problem in units of kappa; returns (problem, kappa)."""
    L = data.Upsilon.shape[-1] - 1
    n = L + 1
    dev_gain = budget.p_dev * scale**2 / budget.sigma2_dev
    user_gain = budget.p_user / budget.sigma2_bs
    kappa = max(
        [float(np.max(dev_gain, initial=0.0))]
        + [float(user_gain[k] * np.real(np.trace(data.Omega[k]))) for k in range(len(user_gain))]
    )
    kappa = kappa if kappa > 0 else 1.0

    constraints: List[Constraint] = []
    for k in range(len(user_gain)):
        constraints.append(
            Constraint(A=user_gain[k] / kappa * data.Omega[k], sense=Sense.GE, rhs=0.0, xi_coeff=-1.0)
        )
    for l in range(L):
        E = np.zeros((n, n), dtype=complex)
        E[l, l] = dev_gain[l] / kappa
        constraints.append(Constraint(A=E, sense=Sense.GE, rhs=0.0, xi_coeff=-1.0))
    for U in data.Upsilon:
        # tightened so the mean candidate stays inside the unit disk after solver error
        margin = MARGIN_FACTOR * tol_feas * float(np.linalg.norm(U))
        constraints.append(Constraint(A=U, sense=Sense.LE, rhs=max(1.0 - margin, 0.5)))
    anchor = np.zeros((n, n), dtype=complex)
    anchor[L, L] = 1.0
    constraints.append(Constraint(A=anchor, sense=Sense.EQ, rhs=1.0))
    return SdpProblem(dim=n, constraints=constraints, c_xi=1.0), kappa


def _candidates(F: np.ndarray, num: int, seq: np.random.SeedSequence) -> List[np.ndarray]:
    """Mean, principal-eigenvector and Gaussian candidates for the scaled f."""
    n = F.shape[0]
    w, U = np.linalg.eigh(0.5 * (F + F.conj().T))
    root = U * np.sqrt(np.maximum(w, 0.0))
    out = [F[:-1, -1] / np.real(F[-1, -1])]
    for i in range(num + 1):
        v = root[:, -1] if i == 0 else root @ rayleigh(np.random.default_rng(child(seq, i)), (n,))
        if abs(v[-1]) > 1e-300:
            out.append(v[:-1] / v[-1])
    return out


def ic_optimize(
    budget: LinkBudget,
    ch: ChannelSet,
    casc: CascadedChannels,
    rep: IcRepresentation,
    solver: SdpSolver,
    num_randomizations: int = 50,
    seq: Optional[np.random.SeedSequence] = None,
) -> IcResult:
    """
    Optimize the effective D2D gains f_sig with one SDP and map them to phi.

    Candidates violating |b_i^H f + d_i| <= 1 are pulled toward the best
    feasible candidate so far by halving the step (at most ten times).
    Selection uses the true min-SINR under the LMMSE combiner.

    Args:
        budget (LinkBudget): Linear transmit and noise powers
        ch (ChannelSet): Direct channels
        casc (CascadedChannels): Cascaded RIS channels
        rep (IcRepresentation): From build_representation or limited feedback
        solver (SdpSolver): Back-end for the single relaxation
        num_randomizations (int): Gaussian candidates besides mean and eigenvector
        seq (SeedSequence): Stream of the Gaussian candidates
    """
    seq = seq or np.random.SeedSequence(0)
    row_norms = np.linalg.norm(rep.B, axis=1)
    scale = 1.0 / float(np.max(row_norms)) if np.max(row_norms) > 0 else 1.0
    data = ic_problem_data(ch, casc, rep, scale=scale)
    problem, kappa = _relaxed_problem(data, budget, scale, solver.settings.tol_feas)

    solves_before = solver.solve_count
    solution = solver.solve(problem)
    if solution.status is Status.INFEASIBLE:
        raise IcInfeasibleError("No effective D2D gain keeps every |phi_n| <= 1")
    if solution.status is Status.NUMERICAL_TROUBLE:
        raise SolverError("IC relaxation failed numerically")
    if solution.status is Status.MAX_ITERS:
        logging.warning(
            f"IC relaxation stopped at its iteration budget (primal {solution.primal_residual:.2e})"
        )
    relaxation = kappa * solution.xi

    def feasible(f: np.ndarray) -> bool:
        return bool(np.max(np.abs(rep.B @ f + rep.d), initial=0.0) <= 1.0)

    def score(f: np.ndarray) -> float:
        return evaluate(budget, ch, casc, rep.B @ f + rep.d).min_sinr

    best_f: Optional[np.ndarray] = None
    best_score = -np.inf
    for f_scaled in _candidates(solution.X, num_randomizations, seq):
        f = scale * f_scaled
        if not feasible(f):
            if best_f is None:
                continue
            step = f - best_f
            for _ in range(BACKTRACK_STEPS):
                step = step / 2.0
                if feasible(best_f + step):
                    break
            else:
                continue
            f = best_f + step
        value = score(f)
        if value > best_score:
            best_f, best_score = f, value

    if best_f is None:
        raise IcInfeasibleError("Every IC recovery candidate violates |phi_n| <= 1")

    phi = phi_ic(rep, best_f)
    F_UB, F_DB = effective_bs_channels(ch, casc, phi)
    W = lmmse_combiner(budget, F_UB, F_DB)
    report = evaluate(budget, ch, casc, phi, W)
    if report.min_sinr > relaxation * (1.0 + 1e-4) + 1e-9:
        logging.warning(
            f"IC min-SINR {report.min_sinr:.6g} exceeds relaxation optimum {relaxation:.6g}"
        )
    return IcResult(
        phi=phi,
        W=W,
        f_sig=best_f,
        relaxation=relaxation,
        report=report,
        sdp_solves=solver.solve_count - solves_before,
    )


@dataclass(frozen=True)
class LimitedFeedback:
    b: np.ndarray
    d: np.ndarray
    feedback_count: int


def limited_feedback_single_pair(ch: ChannelSet, casc: CascadedChannels) -> LimitedFeedback:
    """
    The single D2D pair computes (b, d) from its own cascaded and direct
    channels and feeds back these 2N coefficients instead of full CSI.
    """
    M, K, L, N = ch.dims
    if L != 1:
        raise UnsupportedError(f"Limited feedback is defined for one D2D pair, got L={L}")
    A = np.vstack((np.conj(casc.g_DD[0, 0])[None, :], np.conj(casc.g_UD[0])))
    h = np.concatenate(([ch.H_DD[0, 0]], ch.H_UD[0]))
    pinv = _right_inverse(A)
    return LimitedFeedback(b=pinv[:, 0], d=-pinv @ h, feedback_count=2 * N)


class FeedbackMode(str, Enum):
    FULL_MULTI = "full_multi"
    FULL_SINGLE = "full_single"
    LIMITED_SINGLE = "limited_single"


def feedback_cost(K: int, L: int, N: int, mode) -> int:
    """Complex coefficients each receive device feeds back to the BS."""
    mode = FeedbackMode(mode)
    if mode is FeedbackMode.FULL_MULTI:
        return (L + K) * (N + 1)
    if mode is FeedbackMode.FULL_SINGLE:
        return (K + 1) * (N + 1)
    if L != 1:
        raise UnsupportedError(f"Limited feedback is defined for one D2D pair, got L={L}")
    return 2 * N


class InterferenceCanceller:
    def __init__(self, solver: SdpSolver, num_randomizations: int = 50):
        self.solver = solver
        self.num_randomizations = num_randomizations

    def representation(self, drop: Drop) -> IcRepresentation:
        return build_representation(stack(drop.channels, drop.cascaded))

    def optimize(
        self, drop: Drop, seq: Optional[np.random.SeedSequence] = None
    ) -> IcResult:
        """Run the IC method on a drop; raises IcUnavailableError when N is too small."""
        rep = self.representation(drop)
        return ic_optimize(
            drop.budget,
            drop.channels,
            drop.cascaded,
            rep,
            self.solver,
            num_randomizations=self.num_randomizations,
            seq=seq,
        )
