# src/risic/lift.py
from dataclasses import dataclass

import numpy as np

from .channels import CascadedChannels, ChannelSet
from .config import LinkBudget
from .sinr import Combiner


def hermitize(A: np.ndarray) -> np.ndarray:
    """Symmetrise the trailing two axes: (A + A^H) / 2."""
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def lift_pair(psi: np.ndarray, alpha) -> np.ndarray:
    """
    Lift |alpha + psi^H phi|^2 to tr(phi~ phi~^H Psi) with phi~ = [phi; 1].

    Broadcasts over leading axes: psi (..., N), alpha (...) -> (..., N+1, N+1).
    The result is the block matrix [psi psi^H, alpha psi; psi^H alpha*, |alpha|^2].
    """
    psi = np.asarray(psi, dtype=complex)
    alpha = np.asarray(alpha, dtype=complex)
    v = np.concatenate((psi, np.conj(alpha)[..., None]), axis=-1)
    return hermitize(v[..., :, None] * np.conj(v[..., None, :]))


def trace_product(Phi: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    """Real part of tr(Phi Psi), broadcasting over leading axes of Psi."""
    return np.real(np.einsum("ij,...ji->...", Phi, Psi))


def augment(phi: np.ndarray) -> np.ndarray:
    """Rank-one lifted matrix [phi; 1][phi; 1]^H."""
    v = np.append(np.asarray(phi, dtype=complex), 1.0)
    return np.outer(v, np.conj(v))


@dataclass(frozen=True)
class UserLifts:
    """Psi^UB[k, k'], Psi^DB[k, l] and zeta_k for a fixed combiner."""

    ub: np.ndarray
    db: np.ndarray
    zeta: np.ndarray


@dataclass(frozen=True)
class DeviceLifts:
    """Psi^DD[l, l'] and Psi^UD[l, k]."""

    dd: np.ndarray
    ud: np.ndarray


def build_user_lifts(
    ch: ChannelSet, casc: CascadedChannels, W: Combiner, budget: LinkBudget
) -> UserLifts:
    Wm = W.W
    # (psi_{k,k'})^H = w_k^H G_k', alpha_{k,k'} = w_k^H h_k'
    psi_ub = np.conj(np.einsum("km,jmn->kjn", Wm, casc.G_UB))
    alpha_ub = Wm @ ch.H_UB
    psi_db = np.conj(np.einsum("km,lmn->kln", Wm, casc.G_DB))
    alpha_db = Wm @ ch.H_DB
    return UserLifts(
        ub=lift_pair(psi_ub, alpha_ub),
        db=lift_pair(psi_db, alpha_db),
        zeta=W.zeta * budget.sigma2_bs,
    )


def build_device_lifts(ch: ChannelSet, casc: CascadedChannels) -> DeviceLifts:
    return DeviceLifts(
        dd=lift_pair(casc.g_DD, ch.H_DD),
        ud=lift_pair(casc.g_UD, ch.H_UD),
    )


def lifted_sinr_user(
    k: int, lifts: UserLifts, budget: LinkBudget, Phi: np.ndarray
) -> float:
    """Trace-ratio SINR of user k for a lifted (N+1) x (N+1) matrix."""
    ub = trace_product(Phi, lifts.ub[k])
    db = trace_product(Phi, lifts.db[k])
    signal = budget.p_user[k] * ub[k]
    interference = ub @ budget.p_user - signal + db @ budget.p_dev
    return float(signal / (interference + lifts.zeta[k]))


def lifted_sinr_device(
    l: int, lifts: DeviceLifts, budget: LinkBudget, Phi: np.ndarray
) -> float:
    """Trace-ratio SINR of D2D pair l for a lifted matrix."""
    dd = trace_product(Phi, lifts.dd[l])
    ud = trace_product(Phi, lifts.ud[l])
    signal = budget.p_dev[l] * dd[l]
    interference = dd @ budget.p_dev - signal + ud @ budget.p_user
    return float(signal / (interference + budget.sigma2_dev))
