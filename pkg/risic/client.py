# src/risic/client.py
import os
from typing import List, Optional

from .config import AoConfig, SolverSettings, SystemConfig, load_config
from .scenario import Drop, Fading, draw_drop, stream_for
from .services.harness import Experiment, RunRecord, run_experiment
from .services.ic import InterferenceCanceller
from .services.maxmin import AlternatingOptimizer
from .solver import SdpSolver
from .solvers import make_solver


class Client:
    def __init__(
        self,
        config: Optional[SystemConfig] = None,
        ao: Optional[AoConfig] = None,
        settings: Optional[SolverSettings] = None,
        backend: Optional[str] = os.getenv("RISIC_SDP_BACKEND"),
    ):
        """
        Initialize the risic client.

        Args:
            config (SystemConfig): System dimensions, powers and geometry
            ao (AoConfig): AO and randomization settings
            settings (SolverSettings): SDP solver settings (read from RISIC_SDP_* when omitted)
            backend (str): SDP back-end, "admm" or "cvxpy" (optional)
        """
        self.config = config or SystemConfig()
        self.ao_config = ao or AoConfig()
        self.settings = settings or SolverSettings.from_env(backend=backend)

    @classmethod
    def from_file(cls, path: str) -> "Client":
        """Build a client from a TOML configuration file."""
        loaded = load_config(path)
        return cls(config=loaded.system, ao=loaded.ao, settings=loaded.solver)

    @property
    def solver(self) -> SdpSolver:
        """A fresh SDP solver instance."""
        return make_solver(self.settings)

    @property
    def ao(self) -> AlternatingOptimizer:
        """Access the alternating-optimization service."""
        return AlternatingOptimizer(self.solver, self.ao_config)

    @property
    def ic(self) -> InterferenceCanceller:
        """Access the interference-cancellation service."""
        return InterferenceCanceller(self.solver, self.ao_config.num_randomizations)

    def drop(self, *key: int, fading: Optional[Fading] = None) -> Drop:
        """Draw the network realisation indexed by key under the configured seed."""
        return draw_drop(self.config, stream_for(self.config.seed, *key), fading=fading)

    def experiment(self, **kwargs) -> Experiment:
        return Experiment(base=self.config, ao=self.ao_config, solver=self.settings, **kwargs)

    def run(self, experiment: Optional[Experiment] = None, **kwargs) -> List[RunRecord]:
        """Run a Monte-Carlo experiment (built from kwargs when not given)."""
        return run_experiment(experiment or self.experiment(**kwargs))
