# src/risic/sinr.py
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channels import (
    CascadedChannels,
    ChannelSet,
    PhiLike,
    effective_bs_channels,
    effective_device_channels,
)
from .config import LinkBudget, linear_to_db
from .exceptions import CombinerError, DimensionError


@dataclass(frozen=True)
class Combiner:
    """BS combining matrix; row k is w_k^H."""

    W: np.ndarray

    @property
    def zeta(self) -> np.ndarray:
        """Squared row norms ||w_k||^2."""
        return np.sum(np.abs(self.W) ** 2, axis=1)


@dataclass(frozen=True)
class SinrReport:
    sinr_dev: np.ndarray
    sinr_user: np.ndarray

    @property
    def min_sinr(self) -> float:
        return float(np.min(np.concatenate((self.sinr_dev, self.sinr_user))))

    @property
    def min_sinr_db(self) -> float:
        return float(linear_to_db(self.min_sinr))

    def links_db(self) -> list:
        """Per-link SINRs in dB, devices first."""
        return [
            float(v) for v in linear_to_db(np.concatenate((self.sinr_dev, self.sinr_user)))
        ]


def sinr_device(budget: LinkBudget, F_DD: np.ndarray, F_UD: np.ndarray) -> np.ndarray:
    """SINR of every D2D pair for given effective device-side channels."""
    gains_dd = np.abs(F_DD) ** 2
    signal = budget.p_dev * np.diag(gains_dd)
    interference = gains_dd @ budget.p_dev - signal + (np.abs(F_UD) ** 2) @ budget.p_user
    return signal / (interference + budget.sigma2_dev)


def sinr_user(
    budget: LinkBudget, F_UB: np.ndarray, F_DB: np.ndarray, W: Union[Combiner, np.ndarray]
) -> np.ndarray:
    """SINR of every cellular user after linear combining."""
    Wm = W.W if isinstance(W, Combiner) else np.asarray(W)
    if Wm.shape != (F_UB.shape[1], F_UB.shape[0]):
        raise DimensionError(
            f"Combiner has shape {Wm.shape}, expected {(F_UB.shape[1], F_UB.shape[0])}"
        )
    zeta = np.sum(np.abs(Wm) ** 2, axis=1)
    if np.any(zeta == 0):
        raise CombinerError(f"Combiner rows {np.flatnonzero(zeta == 0).tolist()} are zero")

    # [k, k'] = |w_k^H f_k'|^2
    gains_ub = np.abs(Wm @ F_UB) ** 2
    gains_db = np.abs(Wm @ F_DB) ** 2
    signal = budget.p_user * np.diag(gains_ub)
    interference = gains_ub @ budget.p_user - signal + gains_db @ budget.p_dev
    return signal / (interference + zeta * budget.sigma2_bs)


def lmmse_combiner(budget: LinkBudget, F_UB: np.ndarray, F_DB: np.ndarray) -> Combiner:
    """LMMSE combiners, solved through a Cholesky factorisation of the covariance."""
    M = F_UB.shape[0]
    if F_UB.shape[1] == 0:
        return Combiner(W=np.zeros((0, M), dtype=complex))
    R = (
        (F_UB * budget.p_user) @ F_UB.conj().T
        + (F_DB * budget.p_dev) @ F_DB.conj().T
        + budget.sigma2_bs * np.eye(M)
    )
    R = 0.5 * (R + R.conj().T)
    factor = cho_factor(R, lower=True)
    return Combiner(W=cho_solve(factor, F_UB).conj().T)


def evaluate(
    budget: LinkBudget,
    ch: ChannelSet,
    casc: CascadedChannels,
    phi: PhiLike,
    W: Optional[Union[Combiner, str]] = "lmmse",
) -> SinrReport:
    """
    Evaluate every link for a phase-shift vector.

    Args:
        W: A Combiner, or "lmmse" (or None) to use the LMMSE combiner for phi.
    """
    F_UB, F_DB = effective_bs_channels(ch, casc, phi)
    F_DD, F_UD = effective_device_channels(ch, casc, phi)
    if W is None or isinstance(W, str):
        if W not in (None, "lmmse"):
            raise ValueError(f"Unknown combiner: {W}")
        W = lmmse_combiner(budget, F_UB, F_DB)
    return SinrReport(
        sinr_dev=sinr_device(budget, F_DD, F_UD),
        sinr_user=sinr_user(budget, F_UB, F_DB, W),
    )
