from __future__ import annotations

import time

import numpy as np
import pytest

from shiftgof.experiments import Alternative, ExperimentConfig, run_power_study, run_size_study
from shiftgof.law import build_law
from shiftgof.limits import (
    default_grids,
    estimate_quantiles,
    eta_edf_integrand,
    eta_integrand,
    integrand,
    score_integrand,
    simulate_limit,
    wiener_increments,
)
from shiftgof.models import get_model

EPSILONS = (0.01, 0.05, 0.1)
N_MC = 100_000


@pytest.fixture(scope="session")
def seconds():
    """Wall time spent building the expensive session fixtures, keyed by fixture name."""
    return {}


@pytest.fixture(scope="session")
def ou_model():
    return get_model("ou")


@pytest.fixture(scope="session")
def ou_law(ou_model):
    return build_law(ou_model)


@pytest.fixture(scope="session")
def limit_batch(ou_law, seconds):
    """Cached ``(kind, seed) -> LimitSampleBatch`` with the full 1e5 replicates."""
    cache = {}

    def get(kind, seed=1):
        if (kind, seed) not in cache:
            t0 = time.perf_counter()
            cache[(kind, seed)] = simulate_limit(kind, ou_law, N_MC, seed)
            seconds[f"limit_batch[{kind},{seed}]"] = time.perf_counter() - t0
        return cache[(kind, seed)]

    return get


@pytest.fixture(scope="session")
def ou_tables(limit_batch):
    """Statistic name -> quantile table (seed 1)."""
    return {
        "delta_lte": estimate_quantiles(limit_batch("delta"), EPSILONS),
        "delta_edf": estimate_quantiles(limit_batch("Delta"), EPSILONS),
        "mu_kernel": estimate_quantiles(limit_batch("mu"), EPSILONS),
    }


@pytest.fixture(scope="session")
def h0_study(ou_law, ou_tables):
    """Desk-scale size study: 500 replicates at theta0 in {0, 3}, T=200, dt=0.01."""
    config = ExperimentConfig(
        model="ou", theta0=(0.0, 3.0), T=(200.0,), dt=0.01, n_replications=500,
        epsilons=EPSILONS, statistics=("delta_lte", "delta_edf"), seed=2024,
    )
    return run_size_study(config, tables=ou_tables, law=ou_law, write=False)


@pytest.fixture(scope="session")
def power_study(ou_law, ou_tables):
    config = ExperimentConfig(
        model="ou", T=(50.0, 100.0, 200.0), dt=0.01, n_replications=200,
        epsilons=EPSILONS, statistics=("delta_lte", "delta_edf"), seed=77,
        alternatives=(Alternative("ou2x", "ou", {"rate": 2.0}), Alternative("cubic", "cubic")),
    )
    return run_power_study(config, tables=ou_tables, law=ou_law, write=False)


@pytest.fixture(scope="session")
def inner_sums(ou_law, seconds):
    """1e5 replicates of ``int Phi(y, x) dW(y)`` for the fields used by the isometry oracles.

    Keys: ``(field, x)`` with field in {"eta", "eta_edf", "delta", "Delta"}, plus ``"score"``.
    """
    y_grid, _ = default_grids(ou_law)
    y = y_grid.cell_midpoints()
    xs = np.array([-1.0, 0.0, 1.0])
    columns = {"score": score_integrand(ou_law, y)[:, None]}
    for name, phi in (("eta", eta_integrand(ou_law, y, xs)), ("eta_edf", eta_edf_integrand(ou_law, y, xs)),
                      ("delta", integrand("delta", ou_law, y, xs)), ("Delta", integrand("Delta", ou_law, y, xs))):
        for j, x in enumerate(xs):
            columns[(name, float(x))] = phi[:, j : j + 1]
    t0 = time.perf_counter()
    keys = list(columns)
    phi = np.hstack([columns[k] for k in keys])
    out = np.empty((N_MC, len(keys)))
    for start in range(0, N_MC, 10_000):
        idx = range(start, start + 10_000)
        out[start : start + 10_000] = wiener_increments(1, idx, y_grid) @ phi
    seconds["inner_sums"] = time.perf_counter() - t0
    return {k: out[:, i] for i, k in enumerate(keys)}
