from .client import Client
from .config import AoConfig, SolverSettings, SystemConfig, load_config
from .exceptions import (
    ConfigError,
    IcInfeasibleError,
    IcUnavailableError,
    RisError,
    SolverError,
)
from .services import AlternatingOptimizer, InterferenceCanceller

__version__ = "0.1.0"
__all__ = [
    "Client",
    "SystemConfig",
    "AoConfig",
    "SolverSettings",
    "load_config",
    "AlternatingOptimizer",
    "InterferenceCanceller",
    "RisError",
    "ConfigError",
    "SolverError",
    "IcUnavailableError",
    "IcInfeasibleError",
]
