# src/risic/config.py
import dataclasses
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import toml

from .exceptions import ConfigError

Point = Tuple[float, float]


class LinkClass(str, Enum):
    USER_RIS = "user-ris"
    TXD_RIS = "txd-ris"
    RIS_RXD = "ris-rxd"
    RIS_BS = "ris-bs"
    USER_BS = "user-bs"
    TXD_BS = "txd-bs"
    USER_RXD = "user-rxd"
    TXD_RXD = "txd-rxd"


def default_exponents() -> Dict[LinkClass, float]:
    """Path-loss exponents of the reference deployment."""
    exponents = {link: 2.2 for link in LinkClass}
    exponents[LinkClass.USER_BS] = 4.0
    exponents[LinkClass.TXD_BS] = 4.0
    exponents[LinkClass.USER_RXD] = 5.0
    exponents[LinkClass.TXD_RXD] = 5.0
    return exponents


def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def db_to_linear(value_db: Any) -> Any:
    """Convert dB (scalar or array) to a linear power ratio."""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value: Any) -> Any:
    """Convert a linear power ratio (scalar or array) to dB; zero maps to -inf."""
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(value)


@dataclass(frozen=True)
class Geometry:
    bs_pos: Point = (0.0, 0.0)
    ris_pos: Point = (100.0, 30.0)
    tx_cluster_center: Point = (200.0, 0.0)
    rx_cluster_center: Point = (50.0, 0.0)
    cluster_radius: float = 25.0
    pathloss_exponents: Mapping[LinkClass, float] = field(
        default_factory=default_exponents
    )
    beta0_db: float = -30.0
    d0: float = 1.0

    def __post_init__(self):
        exponents = default_exponents()
        for key, value in dict(self.pathloss_exponents).items():
            try:
                exponents[LinkClass(key)] = float(value)
            except ValueError as e:
                raise ConfigError(f"Unknown link class: {key}", e)
        object.__setattr__(self, "pathloss_exponents", exponents)

        for link, eta in exponents.items():
            if not eta >= 2.0:
                raise ConfigError(
                    f"Path-loss exponent for {link.value} must be >= 2, got {eta}"
                )
        if not self.cluster_radius >= 0.0:
            raise ConfigError(
                f"cluster_radius must be non-negative, got {self.cluster_radius}"
            )
        if not self.d0 > 0.0:
            raise ConfigError(f"d0 must be positive, got {self.d0}")

    def exponent(self, link: LinkClass) -> float:
        return self.pathloss_exponents[link]


@dataclass(frozen=True)
class SystemConfig:
    M: int = 8
    K: int = 2
    L: int = 2
    N: int = 64
    p_user: float = 30.0
    p_dev: float = 30.0
    noise_psd: float = -169.0
    bandwidth: float = 1e6
    seed: int = 2023
    geometry: Geometry = field(default_factory=Geometry)

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ConfigError(f"M and N must be >= 1, got M={self.M}, N={self.N}")
        if self.K < 0 or self.L < 0 or self.K + self.L < 1:
            raise ConfigError(
                f"K and L must be non-negative with K + L >= 1, got K={self.K}, L={self.L}"
            )
        for name in ("p_user", "p_dev", "noise_psd"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")

    @property
    def ic_available(self) -> bool:
        """Whether N is large enough for exact interference cancellation."""
        return self.L >= 1 and self.N >= self.L * (self.K + self.L)

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class LinkBudget:
    """Linear-scale powers derived once from a SystemConfig."""

    p_user: np.ndarray
    p_dev: np.ndarray
    sigma2_bs: float
    sigma2_dev: float

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "LinkBudget":
        noise = dbm_to_watts(cfg.noise_psd + 10.0 * math.log10(cfg.bandwidth))
        return cls(
            p_user=np.full(cfg.K, dbm_to_watts(cfg.p_user)),
            p_dev=np.full(cfg.L, dbm_to_watts(cfg.p_dev)),
            sigma2_bs=noise,
            sigma2_dev=noise,
        )

    @property
    def K(self) -> int:
        return len(self.p_user)

    @property
    def L(self) -> int:
        return len(self.p_dev)


class InitMode(str, Enum):
    RANDOM = "random"
    ZERO = "zero"
    GIVEN = "given"


class Driver(str, Enum):
    DINKELBACH = "dinkelbach"
    BISECTION = "bisection"


@dataclass(frozen=True)
class AoConfig:
    max_outer_iters: int = 30
    outer_tol: float = float(os.getenv("RISIC_AO_OUTER_TOL", "1e-3"))
    dinkelbach_tol: float = float(os.getenv("RISIC_DINKELBACH_TOL", "1e-3"))
    dinkelbach_max_iters: int = 20
    sdp_tol_feas: float = 1e-5
    sdp_tol_gap: float = 1e-4
    num_randomizations: int = 50
    init: InitMode = InitMode.RANDOM
    initial_phi: Optional[np.ndarray] = None
    driver: Driver = Driver.DINKELBACH
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "init", InitMode(self.init))
        object.__setattr__(self, "driver", Driver(self.driver))
        for name in (
            "max_outer_iters",
            "dinkelbach_max_iters",
            "num_randomizations",
            "workers",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        tolerances = (self.outer_tol, self.dinkelbach_tol, self.sdp_tol_feas, self.sdp_tol_gap)
        if not all(tol > 0 for tol in tolerances):
            raise ConfigError("AO tolerances must be positive")
        if self.init is InitMode.GIVEN and self.initial_phi is None:
            raise ConfigError("init=given requires initial_phi")

    def replace(self, **changes: Any) -> "AoConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SolverSettings:
    backend: str = "admm"
    tol_feas: float = 1e-7
    tol_gap: float = 1e-6
    max_iters: int = 20000
    restarts: int = 2
    dump_dir: Optional[str] = None

    def __post_init__(self):
        if self.backend not in ("admm", "cvxpy"):
            raise ConfigError(f"Unknown SDP backend: {self.backend}")
        if not (self.tol_feas > 0 and self.tol_gap > 0):
            raise ConfigError("Solver tolerances must be positive")
        if self.max_iters < 1 or self.restarts < 0:
            raise ConfigError("max_iters must be >= 1 and restarts >= 0")

    @classmethod
    def from_env(cls, **overrides: Any) -> "SolverSettings":
        """Build settings from RISIC_SDP_* variables; explicit overrides win."""
        values: Dict[str, Any] = {}
        env_map = {
            "backend": ("RISIC_SDP_BACKEND", str),
            "tol_feas": ("RISIC_SDP_TOL_FEAS", float),
            "tol_gap": ("RISIC_SDP_TOL_GAP", float),
            "max_iters": ("RISIC_SDP_MAX_ITERS", int),
            "dump_dir": ("RISIC_SDP_DUMP_DIR", str),
        }
        for name, (var, cast) in env_map.items():
            raw = os.getenv(var)
            if raw:
                try:
                    values[name] = cast(raw)
                except ValueError as e:
                    raise ConfigError(f"Invalid value for {var}: {raw}", e)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def replace(self, **changes: Any) -> "SolverSettings":
        return dataclasses.replace(self, **changes)


@dataclass
class ConfigFile:
    system: SystemConfig
    ao: AoConfig
    solver: SolverSettings
    experiment: Dict[str, Any]


def _build(cls, section: Dict[str, Any], name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"Unknown keys in [{name}]: {sorted(unknown)}")
    try:
        return cls(**section)
    except TypeError as e:
        raise ConfigError(f"Invalid [{name}] section", e)


def load_config(path: str) -> ConfigFile:
    """
    Load a TOML configuration file.

    Args:
        path (str): File with optional [system], [geometry],
            [geometry.pathloss_exponents], [ao], [solver] and [experiment]
            tables. Missing keys take the reference-deployment defaults.
    """
    try:
        data = toml.load(path)
    except (OSError, toml.TomlDecodeError) as e:
        raise ConfigError(f"Could not read config file {path}", e)

    unknown = set(data) - {"system", "geometry", "ao", "solver", "experiment"}
    if unknown:
        raise ConfigError(f"Unknown config sections: {sorted(unknown)}")

    geometry_section = dict(data.get("geometry", {}))
    for key in ("bs_pos", "ris_pos", "tx_cluster_center", "rx_cluster_center"):
        if key in geometry_section:
            geometry_section[key] = tuple(float(v) for v in geometry_section[key])
    geometry = _build(Geometry, geometry_section, "geometry")

    system_section = dict(data.get("system", {}))
    system_section["geometry"] = geometry
    system = _build(SystemConfig, system_section, "system")

    ao = _build(AoConfig, dict(data.get("ao", {})), "ao")
    solver_section = dict(data.get("solver", {}))
    unknown = set(solver_section) - {f.name for f in dataclasses.fields(SolverSettings)}
    if unknown:
        raise ConfigError(f"Unknown keys in [solver]: {sorted(unknown)}")
    solver = SolverSettings.from_env(**solver_section)

    return ConfigFile(
        system=system,
        ao=ao,
        solver=solver,
        experiment=dict(data.get("experiment", {})),
    )
