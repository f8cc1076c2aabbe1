# tests/conftest.py
import numpy as np
import pytest
from dotenv import load_dotenv

from risic.channels import ChannelSet, build_cascaded
from risic.config import AoConfig, LinkBudget, SolverSettings, SystemConfig
from risic.scenario import rayleigh
from risic.solvers import AdmmSolver

load_dotenv()


def _unit_budget(K: int, L: int) -> LinkBudget:
    return LinkBudget(p_user=np.ones(K), p_dev=np.ones(L), sigma2_bs=1.0, sigma2_dev=1.0)


@pytest.fixture
def unit_budget():
    """Factory for a unit-power, unit-noise LinkBudget with K users and L pairs."""
    return _unit_budget


@pytest.fixture
def make_instance():
    """Synthetic unit-variance channels with a unit link budget: (budget, ch, casc)."""

    def make(M=2, K=1, L=1, N=4, seed=0, direct_scale=1.0):
        rng = np.random.default_rng(seed)
        ch = ChannelSet(
            H_RB=rayleigh(rng, (M, N)),
            H_UD=direct_scale * rayleigh(rng, (L, K)),
            H_DD=direct_scale * rayleigh(rng, (L, L)),
            H_UB=direct_scale * rayleigh(rng, (M, K)),
            H_DB=direct_scale * rayleigh(rng, (M, L)),
            H_RD=rayleigh(rng, (L, N)),
            H_UR=rayleigh(rng, (N, K)),
            H_DR=rayleigh(rng, (N, L)),
        )
        return _unit_budget(K, L), ch, build_cascaded(ch)

    return make


@pytest.fixture
def settings():
    return SolverSettings(backend="admm", tol_feas=1e-7, tol_gap=1e-6, max_iters=20000, restarts=2)


@pytest.fixture
def solver(settings):
    return AdmmSolver(settings)


@pytest.fixture
def tiny_config():
    """Smallest deployment with interference cancellation available."""
    return SystemConfig(M=2, K=1, L=1, N=4)


@pytest.fixture
def fast_ao():
    return AoConfig(
        max_outer_iters=2, dinkelbach_max_iters=5, num_randomizations=5, outer_tol=1e-3
    )


@pytest.fixture
def fast_settings():
    return SolverSettings(backend="admm", max_iters=2000, restarts=0)
