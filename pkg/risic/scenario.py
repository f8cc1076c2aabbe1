# src/risic/scenario.py
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .channels import CascadedChannels, ChannelSet, build_cascaded
from .config import Geometry, LinkBudget, LinkClass, SystemConfig, db_to_linear
from .exceptions import CollocatedNodesError, DimensionError

RandomStream = np.random.Generator
Fading = Callable[[RandomStream, Tuple[int, ...]], np.ndarray]


def rayleigh(rng: RandomStream, shape: Tuple[int, ...]) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian entries."""
    draws = rng.standard_normal(shape + (2,))
    return (draws[..., 0] + 1j * draws[..., 1]) / np.sqrt(2.0)


def stream_for(seed: int, *key: int) -> np.random.SeedSequence:
    """Seed sequence for an indexed sub-stream, e.g. (seed, sweep, trial)."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))


def child(seq: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """Indexed child of a seed sequence; independent of spawn order."""
    return np.random.SeedSequence(
        entropy=seq.entropy, spawn_key=tuple(seq.spawn_key) + tuple(key)
    )


@dataclass(frozen=True)
class PositionSet:
    bs: np.ndarray
    ris: np.ndarray
    users: np.ndarray
    tx: np.ndarray
    rx: np.ndarray


@dataclass(frozen=True)
class Drop:
    """One network realisation."""

    cfg: SystemConfig
    positions: PositionSet
    channels: ChannelSet
    cascaded: CascadedChannels
    budget: LinkBudget


def _uniform_disk(
    rng: RandomStream, center: Sequence[float], radius: float, count: int
) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=count))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return np.asarray(center, dtype=float) + np.column_stack(
        (r * np.cos(theta), r * np.sin(theta))
    )


def draw_positions(cfg: SystemConfig, rng: RandomStream) -> PositionSet:
    """Drop users and transmit devices in one disk and receive devices in another."""
    geo = cfg.geometry
    return PositionSet(
        bs=np.asarray(geo.bs_pos, dtype=float),
        ris=np.asarray(geo.ris_pos, dtype=float),
        users=_uniform_disk(rng, geo.tx_cluster_center, geo.cluster_radius, cfg.K),
        tx=_uniform_disk(rng, geo.tx_cluster_center, geo.cluster_radius, cfg.L),
        rx=_uniform_disk(rng, geo.rx_cluster_center, geo.cluster_radius, cfg.L),
    )


def pathloss(
    geometry: Geometry, a: Sequence[float], b: Sequence[float], link_class: LinkClass
) -> float:
    """Large-scale gain beta0 * (d / d0) ** -eta on a linear scale."""
    d = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if d <= 0.0:
        raise CollocatedNodesError(
            f"Nodes at {tuple(a)} and {tuple(b)} are collocated ({link_class.value})"
        )
    beta0 = float(db_to_linear(geometry.beta0_db))
    return beta0 * (d / geometry.d0) ** (-geometry.exponent(link_class))


def _gains(
    geometry: Geometry, src: np.ndarray, dst: np.ndarray, link: LinkClass
) -> np.ndarray:
    """Path-loss matrix indexed [dst, src]."""
    return np.array(
        [[pathloss(geometry, s, d, link) for s in src] for d in dst]
    ).reshape(len(dst), len(src))


def draw_channels(
    cfg: SystemConfig,
    positions: PositionSet,
    rng: RandomStream,
    fading: Optional[Fading] = None,
) -> ChannelSet:
    """
    Draw every direct and RIS channel; entry variances equal the link's path loss.

    Args:
        cfg (SystemConfig): System dimensions and geometry
        positions (PositionSet): Node positions from draw_positions
        rng (RandomStream): Source of small-scale fading
        fading (Fading): Unit-variance fading generator (Rayleigh by default)
    """
    if (
        positions.users.shape != (cfg.K, 2)
        or positions.tx.shape != (cfg.L, 2)
        or positions.rx.shape != (cfg.L, 2)
    ):
        raise DimensionError("Positions do not match the configured K and L")

    fading = fading or rayleigh
    geo = cfg.geometry
    M, K, L, N = cfg.M, cfg.K, cfg.L, cfg.N
    bs = positions.bs[None, :]
    ris = positions.ris[None, :]

    def draw(gain: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        return np.sqrt(gain) * fading(rng, shape)

    beta_rb = _gains(geo, ris, bs, LinkClass.RIS_BS)
    beta_ud = _gains(geo, positions.users, positions.rx, LinkClass.USER_RXD)
    beta_dd = _gains(geo, positions.tx, positions.rx, LinkClass.TXD_RXD)
    beta_ub = _gains(geo, positions.users, bs, LinkClass.USER_BS)
    beta_db = _gains(geo, positions.tx, bs, LinkClass.TXD_BS)
    beta_rd = _gains(geo, ris, positions.rx, LinkClass.RIS_RXD)
    beta_ur = _gains(geo, positions.users, ris, LinkClass.USER_RIS)
    beta_dr = _gains(geo, positions.tx, ris, LinkClass.TXD_RIS)

    return ChannelSet(
        H_RB=draw(beta_rb, (M, N)),
        H_UD=draw(beta_ud, (L, K)),
        H_DD=draw(beta_dd, (L, L)),
        H_UB=draw(beta_ub, (M, K)),
        H_DB=draw(beta_db, (M, L)),
        H_RD=draw(beta_rd, (L, N)),
        H_UR=draw(beta_ur, (N, K)),
        H_DR=draw(beta_dr, (N, L)),
    )


def draw_drop(
    cfg: SystemConfig, seq: np.random.SeedSequence, fading: Optional[Fading] = None
) -> Drop:
    """Positions, channels and link budget from one indexed seed sequence."""
    positions = draw_positions(cfg, np.random.default_rng(child(seq, 0)))
    channels = draw_channels(
        cfg, positions, np.random.default_rng(child(seq, 1)), fading=fading
    )
    return Drop(
        cfg=cfg,
        positions=positions,
        channels=channels,
        cascaded=build_cascaded(channels),
        budget=LinkBudget.from_config(cfg),
    )
