from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from shiftgof.errors import ConfigError, TableError
from shiftgof.experiments import (
    FIGURE_EPSILONS,
    Alternative,
    ExperimentConfig,
    binomial_ci,
    density_curve,
    reproduce_ou_figures,
    run_power_study,
    run_size_study,
    size_scenarios,
)
from shiftgof.limits import estimate_quantiles, simulate_limit

SMALL = """
[study]
model = "ou"
theta0 = [0.0, 1.5]
T = 20.0
dt = 0.01
n_replications = 120
epsilons = [0.05, 0.1]
statistics = ["delta_lte", "delta_edf", "mu_kernel"]
seed = 3
output_dir = "out"

[tables]
delta = "tables/delta.txt"
Delta = "tables/Delta.txt"
mu = "tables/mu.txt"

[limits]
n_mc = 4000
seed = 2

[[alternatives]]
name = "steep"
model = "ou"
params = { rate = 2.0 }
"""


@pytest.fixture()
def small_config(tmp_path):
    (tmp_path / "study.toml").write_text(SMALL)
    return ExperimentConfig.from_toml(tmp_path / "study.toml")


def csv_outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


def test_config_parsing(small_config, tmp_path):
    assert small_config.theta0 == (0.0, 1.5)
    assert small_config.T == (20.0,)
    assert small_config.alternatives[0].params == {"rate": 2.0}
    assert small_config.output_dir == str(tmp_path / "out")
    assert small_config.init is None


@pytest.mark.parametrize("snippet", [
    '[study]\nmodle = "ou"\n',
    '[study]\nmodel = "ou"\n[extra]\nx = 1\n',
    '[[alternatives]]\nname = "a"\nmodel = "ou"\nrate = 2\n',
    '[study]\nstatistics = ["chi2"]\n',
    '[study]\ninit = "burn-in"\n',
])
def test_config_rejects_unknown_or_bad_keys(tmp_path, snippet):
    (tmp_path / "bad.toml").write_text(snippet)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml(tmp_path / "bad.toml")


def test_scenario_seeds_are_distinct(small_config):
    seeds = [s.seed for s in size_scenarios(small_config)]
    assert len(set(seeds)) == len(seeds)


def test_binomial_interval():
    lo, hi = binomial_ci(0, 100)
    assert lo == 0.0 and hi > 0.0
    lo, hi = binomial_ci(100, 100)
    assert hi == 1.0 and lo < 1.0
    lo, hi = binomial_ci(10, 200)
    assert lo < 0.05 < hi
    assert hi - lo == pytest.approx(2 * 1.96 * np.sqrt(0.05 * 0.95 / 200), rel=1e-3)


def test_size_study_is_reproducible_and_resumable(small_config):
    report = run_size_study(small_config)
    out = Path(small_config.output_dir)
    first = csv_outputs(out)
    assert {"size_rates.csv", "size_histograms.csv"} <= set(first)
    meta = json.loads((out / "size_report.json").read_text())
    assert meta["study"] == "size" and "seconds" in meta["runtime"]
    for r in report.results:
        for (stat, eps), (k, n, rate, lo, hi) in r.rates.items():
            assert 0 <= lo <= rate <= hi <= 1
        assert r.rates[("delta_lte", 0.05)][0] <= r.rates[("delta_lte", 0.1)][0]

    # drop some replicates; the rerun fills them in and reproduces every byte
    rec = out / "records_size_theta0_T20.csv"
    lines = rec.read_text().splitlines()
    rec.write_text("\n".join(lines[:40] + lines[70:]) + "\n")
    run_size_study(dataclasses.replace(small_config, threads=3))
    assert csv_outputs(out) == first


def test_thread_count_does_not_change_values(small_config):
    one = run_size_study(small_config, write=False)
    three = run_size_study(dataclasses.replace(small_config, threads=3), write=False)
    for r1, r3 in zip(one.results, three.results):
        for stat in small_config.statistics:
            assert np.array_equal(r1.values[stat], r3.values[stat])


def test_power_study_in_null_family_is_a_size_study(tmp_path, ou_law, ou_tables):
    config = ExperimentConfig(
        model="ou", T=(200.0,), n_replications=200, epsilons=(0.05,), statistics=("delta_lte",),
        seed=5, output_dir=str(tmp_path), alternatives=(Alternative("null", "ou"),),
    )
    report = run_power_study(config, tables=ou_tables, law=ou_law, write=False)
    assert 0.01 <= report.rate("power_null_T200", "delta_lte", 0.05) <= 0.1


def test_missing_tables_are_an_error(small_config, ou_law):
    config = dataclasses.replace(small_config, tables={})
    with pytest.raises(ConfigError):
        run_size_study(config, tables={}, law=ou_law, write=False)


def test_table_for_wrong_model_is_rejected(small_config, tmp_path, ou_law):
    from shiftgof.experiments import ensure_tables
    from shiftgof.law import build_law
    from shiftgof.models import get_model

    other = build_law(get_model("ou", rate=2.0))
    estimate_quantiles(simulate_limit("delta", other, 3000, 1), [0.05, 0.1], min_tail=100).save(
        tmp_path / "t.txt")
    config = dataclasses.replace(small_config, statistics=("delta_lte",), tables={"delta": str(tmp_path / "t.txt")})
    with pytest.raises(ConfigError, match="model"):
        ensure_tables(config, ou_law)


def test_figures(tmp_path, limit_batch):
    files = reproduce_ou_figures(limit_batch("delta"), limit_batch("Delta"), tmp_path)
    thr = np.loadtxt(files["thresholds"], delimiter=",", skiprows=1)
    assert np.allclose(thr[:, 0], FIGURE_EPSILONS)
    assert np.all(np.diff(thr[:, 1]) < 0) and np.all(np.diff(thr[:, 2]) < 0)
    for kind in ("delta", "Delta"):
        data = np.loadtxt(files[f"density_{kind}"], delimiter=",", skiprows=1)
        assert np.all(data[:, 0] >= 0)
        mode = data[np.argmax(data[:, 1]), 0]
        assert mode > 0
        assert data[0, 1] < data[:, 1].max()


def test_figure_densities_are_stable_across_seeds(limit_batch):
    a, b = limit_batch("delta", 1).samples, limit_batch("delta", 2).samples
    grid = np.linspace(0, np.quantile(a, 0.999), 200)
    assert np.max(np.abs(density_curve(a, grid) - density_curve(b, grid))) < 0.05


def test_figures_need_the_right_batches(tmp_path, limit_batch):
    with pytest.raises(TableError):
        reproduce_ou_figures(limit_batch("Delta"), limit_batch("delta"), tmp_path)


@pytest.mark.parametrize("profile", sorted((Path(__file__).parents[1] / "configs").glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_profiles_parse(profile):
    config = ExperimentConfig.from_toml(profile)
    assert config.n_replications >= 200 and config.limits_n_mc == 100_000
    for alt in config.alternatives:
        alt.drift()
