# src/risic/channels.py
from dataclasses import dataclass, fields
from typing import Tuple, Union

import numpy as np

from .exceptions import DimensionError

FEASIBILITY_SLACK = 1e-9


@dataclass(frozen=True)
class ChannelSet:
    """
    Direct and RIS channels of one network realisation.

    Shapes: H_RB (M, N), H_UD (L, K), H_DD (L, L), H_UB (M, K), H_DB (M, L),
    H_RD (L, N) whose row l is (h^RD_l)^H, H_UR (N, K), H_DR (N, L).
    """

    H_RB: np.ndarray
    H_UD: np.ndarray
    H_DD: np.ndarray
    H_UB: np.ndarray
    H_DB: np.ndarray
    H_RD: np.ndarray
    H_UR: np.ndarray
    H_DR: np.ndarray

    def __post_init__(self):
        M, N = self.H_RB.shape
        L, K = self.H_UD.shape
        expected = {
            "H_RB": (M, N),
            "H_UD": (L, K),
            "H_DD": (L, L),
            "H_UB": (M, K),
            "H_DB": (M, L),
            "H_RD": (L, N),
            "H_UR": (N, K),
            "H_DR": (N, L),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise DimensionError(f"{name} has shape {actual}, expected {shape}")

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        """(M, K, L, N)."""
        M, N = self.H_RB.shape
        L, K = self.H_UD.shape
        return M, K, L, N


@dataclass(frozen=True)
class CascadedChannels:
    """
    Cascaded RIS channels.

    g_DD[l, l'] and g_UD[l, k] hold the column vectors g whose conjugate
    transpose is the 1 x N cascaded row; G_UB[k] and G_DB[l] are M x N.
    """

    g_DD: np.ndarray
    g_UD: np.ndarray
    G_UB: np.ndarray
    G_DB: np.ndarray

    @property
    def N(self) -> int:
        return self.G_UB.shape[-1] if self.G_UB.size else self.g_DD.shape[-1]


@dataclass(frozen=True)
class PhaseShift:
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=complex).ravel())

    def __len__(self) -> int:
        return len(self.phi)

    @property
    def max_magnitude(self) -> float:
        return float(np.max(np.abs(self.phi))) if self.phi.size else 0.0

    def is_feasible(self, slack: float = FEASIBILITY_SLACK) -> bool:
        return self.max_magnitude <= 1.0 + slack

    @classmethod
    def zeros(cls, N: int) -> "PhaseShift":
        return cls(np.zeros(N, dtype=complex))

    @classmethod
    def random(cls, N: int, rng: np.random.Generator) -> "PhaseShift":
        """Unit-modulus phases drawn uniformly on [0, 2pi)."""
        return cls(np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=N)))


PhiLike = Union[PhaseShift, np.ndarray]


def as_vector(phi: PhiLike) -> np.ndarray:
    if isinstance(phi, PhaseShift):
        return phi.phi
    return np.asarray(phi, dtype=complex).ravel()


def build_cascaded(ch: ChannelSet) -> CascadedChannels:
    """Form the four cascaded channel families from the individual RIS links."""
    # (g_{l,l'})^H = (h^RD_l)^H diag(h^DR_l'), and H_RD rows already are (h^RD_l)^H
    g_DD = np.conj(ch.H_RD[:, None, :] * ch.H_DR.T[None, :, :])
    g_UD = np.conj(ch.H_RD[:, None, :] * ch.H_UR.T[None, :, :])
    G_UB = ch.H_RB[None, :, :] * ch.H_UR.T[:, None, :]
    G_DB = ch.H_RB[None, :, :] * ch.H_DR.T[:, None, :]
    return CascadedChannels(g_DD=g_DD, g_UD=g_UD, G_UB=G_UB, G_DB=G_DB)


def _check_phi(phi: np.ndarray, N: int) -> None:
    if phi.shape != (N,):
        raise DimensionError(f"phi has length {phi.size}, expected {N}")


def effective_bs_channels(
    ch: ChannelSet, casc: CascadedChannels, phi: PhiLike
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Effective channels towards the BS.

    Returns:
        (F_UB, F_DB) with column k of F_UB equal to h^UB_k + G^UB_k phi
        (shape M x K) and column l of F_DB equal to h^DB_l + G^DB_l phi.
    """
    vec = as_vector(phi)
    _check_phi(vec, ch.dims[3])
    F_UB = ch.H_UB + np.einsum("kmn,n->mk", casc.G_UB, vec)
    F_DB = ch.H_DB + np.einsum("lmn,n->ml", casc.G_DB, vec)
    return F_UB, F_DB


def effective_device_channels(
    ch: ChannelSet, casc: CascadedChannels, phi: PhiLike
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Effective channels towards the receive devices.

    Returns:
        (F_DD, F_UD) with F_DD[l, l'] = h^DD_{l,l'} + (g^DD_{l,l'})^H phi and
        F_UD[l, k] = h^UD_{l,k} + (g^UD_{l,k})^H phi.
    """
    vec = as_vector(phi)
    _check_phi(vec, ch.dims[3])
    F_DD = ch.H_DD + np.einsum("abn,n->ab", np.conj(casc.g_DD), vec)
    F_UD = ch.H_UD + np.einsum("lkn,n->lk", np.conj(casc.g_UD), vec)
    return F_DD, F_UD


def save_channels(ch: ChannelSet, path: str) -> None:
    """
    Write a channel fixture.

    The file is a NumPy ``.npz`` archive with one complex128 array per
    channel, keyed by field name (``H_RB``, ``H_UD``, ...). Complex entries
    are stored as IEEE-754 double pairs in C (row-major) order.
    """
    arrays = {
        f.name: np.ascontiguousarray(getattr(ch, f.name), dtype=np.complex128)
        for f in fields(ChannelSet)
    }
    np.savez(path, **arrays)


def load_channels(path: str) -> ChannelSet:
    with np.load(path) as data:
        missing = {f.name for f in fields(ChannelSet)} - set(data.files)
        if missing:
            raise DimensionError(f"Channel fixture {path} lacks {sorted(missing)}")
        return ChannelSet(
            **{
                f.name: np.array(data[f.name], dtype=np.complex128)
                for f in fields(ChannelSet)
            }
        )
