import warnings

import pytest

from gravicat.experiments import CatConfig, run_cat_trajectories, solve_soliton
from gravicat.field import Grid, Params
from gravicat.potentials import Newton1DSoft

# 1D surrogate whose soliton FWHM is close to hbar^2 / G M^3 (see configs/surrogate.ini)
SURROGATE_M = 1.8
SURROGATE_SOFTENING = 0.08 / SURROGATE_M**3


@pytest.fixture(scope="session")
def soft_soliton():
    """Default-softening 1D soliton at M = 1 on a small grid (FWHM about 3, box 64)."""
    params = Params.dimensionless()
    return solve_soliton(params, Grid(1, 512, 64.0), Newton1DSoft(1.0))


@pytest.fixture(scope="session")
def surrogate():
    params = Params.dimensionless(M=SURROGATE_M)
    grid = Grid(1, 1024, 32.0)
    pot = Newton1DSoft(SURROGATE_SOFTENING)
    return params, grid, pot, solve_soliton(params, grid, pot)


@pytest.fixture(scope="session")
def surrogate_cat(surrogate):
    """Config, soliton, SNE trajectories and linear-control trajectories at ell = 10."""
    params, grid, pot, sol = surrogate
    cfg = CatConfig(params, grid, pot)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = run_cat_trajectories(cfg, sol)
        ctrl = run_cat_trajectories(cfg.linear_control(), sol)
    return cfg, sol, traj, ctrl
