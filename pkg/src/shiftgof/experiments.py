"""Size, power and figure-reproduction studies driven by a TOML configuration.

Configuration schema (unknown keys are rejected)::

    [study]
    model = "ou"                  # registry name of the null family
    model_params = {}             # optional keyword arguments of the family
    theta_interval = [-10, 10]    # optional
    theta0 = [0.0, 3.0]           # size study: true shifts
    T = [200.0]                   # horizons (number or list)
    dt = 0.01
    n_replications = 500
    epsilons = [0.01, 0.05, 0.1]
    statistics = ["delta_lte", "delta_edf"]   # any of delta_lte, delta_edf, mu_kernel
    seed = 1
    output_dir = "out"
    threads = 1
    init = "stationary"           # or a number: fixed X_0

    [tables]                      # one file per limit kind; simulated first when absent
    delta = "tables/ou_delta.txt"
    Delta = "tables/ou_Delta.txt"

    [limits]                      # used only for tables that have to be simulated
    n_mc = 100000
    seed = 1

    [[alternatives]]              # power study: drifts S(x) = S*_family(x)
    name = "ou-rate-2"
    model = "ou"
    params = { rate = 2.0 }
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np
from scipy.stats import gaussian_kde

from . import rng
from .errors import ConfigError, DomainError, TableError
from .estimators import mde_shift, mle_shift
from .gof import TABLE_KIND, cvm_edf, cvm_kernel, cvm_lte
from .law import InvariantLaw, build_law
from .limits import LimitSampleBatch, QuantileTable, estimate_quantiles, simulate_limit
from .models import ShiftDriftModel, get_model
from .simulate import InitRule, STATIONARY, alternative_paths, simulate_paths

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PATH_CHUNK = 50
STATISTICS = ("delta_lte", "delta_edf", "mu_kernel")

_STUDY_KEYS = {
    "model", "model_params", "theta_interval", "theta0", "T", "dt", "n_replications",
    "epsilons", "statistics", "seed", "output_dir", "threads", "init",
}
_TOP_KEYS = {"study", "tables", "limits", "alternatives"}
_LIMIT_KEYS = {"n_mc", "seed"}
_ALT_KEYS = {"name", "model", "params"}


@dataclass(frozen=True)
class Alternative:
    name: str
    model: str
    params: dict = field(default_factory=dict)

    def drift(self):
        try:
            return get_model(self.model, **self.params).drift_star
        except (DomainError, TypeError) as exc:
            raise ConfigError(f"alternative {self.name!r}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "ou"
    model_params: dict = field(default_factory=dict)
    theta_interval: tuple[float, float] | None = None
    theta0: tuple[float, ...] = (0.0,)
    T: tuple[float, ...] = (200.0,)
    dt: float = 0.01
    n_replications: int = 500
    epsilons: tuple[float, ...] = (0.01, 0.05, 0.1)
    statistics: tuple[str, ...] = ("delta_lte", "delta_edf")
    seed: int = 1
    output_dir: str = "out"
    threads: int = 1
    init: float | None = None  # None means stationary
    tables: dict = field(default_factory=dict)
    limits_n_mc: int = 100_000
    limits_seed: int = 1
    alternatives: tuple[Alternative, ...] = ()

    def __post_init__(self):
        bad = [s for s in self.statistics if s not in STATISTICS]
        if bad:
            raise ConfigError(f"unknown statistics {bad}; expected a subset of {STATISTICS}")
        if self.n_replications < 1 or self.dt <= 0 or any(t <= 0 for t in self.T):
            raise ConfigError("n_replications, dt and T must be positive")
        if any(not 0 < e < 1 for e in self.epsilons):
            raise ConfigError("epsilons must lie in (0, 1)")
        names = [a.name for a in self.alternatives]
        if len(set(names)) != len(names):
            raise ConfigError("alternative names must be unique")

    def null_model(self) -> ShiftDriftModel:
        try:
            model = get_model(self.model, **self.model_params)
        except (DomainError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.theta_interval is not None:
            model = model.with_interval(*self.theta_interval)
        return model

    def init_rule(self) -> InitRule:
        return STATIONARY if self.init is None else InitRule.fixed(self.init)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        try:
            raw = tomllib.loads(FsPath(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, base=FsPath(path).parent)

    @classmethod
    def from_dict(cls, raw: dict, base: FsPath | None = None) -> "ExperimentConfig":
        _reject_unknown(raw, _TOP_KEYS, "top level")
        study = dict(raw.get("study", {}))
        _reject_unknown(study, _STUDY_KEYS, "[study]")
        limits = dict(raw.get("limits", {}))
        _reject_unknown(limits, _LIMIT_KEYS, "[limits]")
        tables = dict(raw.get("tables", {}))
        _reject_unknown(tables, {"delta", "Delta", "mu"}, "[tables]")
        alts = []
        for a in raw.get("alternatives", []):
            _reject_unknown(a, _ALT_KEYS, "[[alternatives]]")
            if "name" not in a or "model" not in a:
                raise ConfigError("each alternative needs a name and a model")
            alts.append(Alternative(a["name"], a["model"], dict(a.get("params", {}))))
        base = base or FsPath(".")

        def seq(v):
            return tuple(float(x) for x in (v if isinstance(v, list) else [v]))

        kw = {}
        if "model" in study:
            kw["model"] = study["model"]
        if "model_params" in study:
            kw["model_params"] = dict(study["model_params"])
        if "theta_interval" in study:
            lo, hi = study["theta_interval"]
            kw["theta_interval"] = (float(lo), float(hi))
        for key in ("theta0", "T", "epsilons"):
            if key in study:
                kw[key] = seq(study[key])
        for key, conv in (("dt", float), ("n_replications", int), ("seed", int), ("threads", int)):
            if key in study:
                kw[key] = conv(study[key])
        if "statistics" in study:
            kw["statistics"] = tuple(study["statistics"])
        if "output_dir" in study:
            kw["output_dir"] = str(base / study["output_dir"])
        if "init" in study:
            init = study["init"]
            if init == "stationary":
                kw["init"] = None
            elif isinstance(init, (int, float)):
                kw["init"] = float(init)
            else:
                raise ConfigError("init must be 'stationary' or a number")
        kw["tables"] = {k: str(base / v) for k, v in tables.items()}
        if "n_mc" in limits:
            kw["limits_n_mc"] = int(limits["n_mc"])
        if "seed" in limits:
            kw["limits_seed"] = int(limits["seed"])
        kw["alternatives"] = tuple(alts)
        return cls(**kw)


def _reject_unknown(section: dict, allowed: set, where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")


@dataclass(frozen=True)
class Scenario:
    name: str
    T: float
    seed: int
    theta0: float | None = None
    alternative: Alternative | None = None


@dataclass
class ScenarioResult:
    scenario: Scenario
    values: dict[str, np.ndarray]           # statistic -> per-replicate values
    rates: dict[tuple[str, float], tuple[int, int, float, float, float]]  # k, n, rate, lo, hi


@dataclass
class StudyReport:
    study: str
    results: list[ScenarioResult]
    runtime: dict

    def rate(self, scenario: str, statistic: str, epsilon: float) -> float:
        for r in self.results:
            if r.scenario.name == scenario:
                return r.rates[(statistic, float(epsilon))][2]
        raise KeyError(scenario)

    def values(self, scenario: str, statistic: str) -> np.ndarray:
        for r in self.results:
            if r.scenario.name == scenario:
                return r.values[statistic]
        raise KeyError(scenario)


def binomial_ci(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Normal-approximation interval; the standard error never uses p in {0, 1}."""
    p = k / n
    p_guard = min(max(p, 0.5 / n), 1 - 0.5 / n)
    half = z * np.sqrt(p_guard * (1 - p_guard) / n)
    return max(0.0, p - half), min(1.0, p + half)


def ensure_tables(config: ExperimentConfig, law: InvariantLaw, *, simulate_missing: bool = True) -> dict[str, QuantileTable]:
    """Load (or simulate first) one quantile table per requested statistic."""
    out = {}
    for stat in config.statistics:
        kind = TABLE_KIND[stat]
        path = config.tables.get(kind)
        if path and FsPath(path).exists():
            table = QuantileTable.load(path)
        elif simulate_missing:
            batch = simulate_limit(kind, law, config.limits_n_mc, config.limits_seed, threads=config.threads)
            table = estimate_quantiles(batch, config.epsilons)
            if path:
                FsPath(path).parent.mkdir(parents=True, exist_ok=True)
                table.save(path)
        else:
            raise ConfigError(f"missing quantile table for {kind!r}")
        if table.model_ref != law.model_ref:
            raise ConfigError(f"table {path} is for model {table.model_ref!r}, study uses {law.model_ref!r}")
        for e in config.epsilons:
            try:
                table.threshold(e)
            except TableError as exc:
                raise ConfigError(str(exc)) from exc
        out[stat] = table
    return out


def _statistics_for_path(path, model, law, statistics) -> dict[str, float]:
    rec = {}
    if "delta_lte" in statistics or "delta_edf" in statistics:
        th = mle_shift(path, model).theta_hat
        rec["theta_hat"] = th
        if "delta_lte" in statistics:
            rec["delta_lte"] = cvm_lte(path, model, law, theta_hat=th).statistic_value
        if "delta_edf" in statistics:
            rec["delta_edf"] = cvm_edf(path, model, law, theta_hat=th).statistic_value
    if "mu_kernel" in statistics:
        ts = mde_shift(path, model, law).theta_hat
        rec["theta_star"] = ts
        rec["mu_kernel"] = cvm_kernel(path, model, law, theta_hat=ts).statistic_value
    return rec


def _replicate_seeds(scenario: Scenario, n: int) -> list[int]:
    return [rng.derive_seed(scenario.seed, r) for r in range(n)]


def _simulate_chunk(scenario, config, model, law, seeds):
    init = config.init_rule()
    if scenario.alternative is None:
        return simulate_paths(model, scenario.theta0, scenario.T, config.dt, seeds, init, law=law)
    return alternative_paths(scenario.alternative.drift(), scenario.T, config.dt, seeds, init, law=law)


def _fingerprint(config: ExperimentConfig, scenario: Scenario) -> str:
    payload = json.dumps([config.model, config.model_params, config.theta_interval, config.dt, config.init,
                          scenario.name, scenario.T, scenario.seed, scenario.theta0,
                          None if scenario.alternative is None else [scenario.alternative.model,
                                                                     scenario.alternative.params]],
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _record_columns(statistics) -> list[str]:
    cols = ["replicate", "seed"]
    if "delta_lte" in statistics or "delta_edf" in statistics:
        cols.append("theta_hat")
    cols += [s for s in ("delta_lte", "delta_edf") if s in statistics]
    if "mu_kernel" in statistics:
        cols += ["theta_star", "mu_kernel"]
    return cols


def _load_records(path: FsPath, fingerprint: str, cols: list[str]) -> dict[int, dict]:
    if not path.exists():
        return {}
    lines = path.read_text().splitlines()
    if not lines or lines[0] != f"# fingerprint={fingerprint}" or len(lines) < 2 or lines[1].split(",") != cols:
        return {}
    out = {}
    for row in csv.DictReader(lines[1:]):
        r = int(row["replicate"])
        out[r] = {k: (int(v) if k in ("replicate", "seed") else float(v)) for k, v in row.items()}
    return out


def _write_records(path: FsPath, fingerprint: str, cols: list[str], records: dict[int, dict]):
    buf = io.StringIO()
    buf.write(f"# fingerprint={fingerprint}\n")
    buf.write(",".join(cols) + "\n")
    for r in sorted(records):
        rec = records[r]
        buf.write(",".join(str(rec[c]) if c in ("replicate", "seed") else repr(float(rec[c])) for c in cols) + "\n")
    path.write_text(buf.getvalue())


def run_scenarios(
    study: str,
    scenarios: Sequence[Scenario],
    config: ExperimentConfig,
    *,
    tables: dict[str, QuantileTable] | None = None,
    law: InvariantLaw | None = None,
    write: bool = True,
) -> StudyReport:
    model = config.null_model()
    law = law or build_law(model)
    tables = tables if tables is not None else ensure_tables(config, law)
    missing = [s for s in config.statistics if s not in tables]
    if missing:
        raise ConfigError(f"missing quantile tables for {missing}")
    seeds_used = [s.seed for s in scenarios]
    if len(set(seeds_used)) != len(seeds_used):
        raise ConfigError("scenario seeds must be distinct")
    out_dir = FsPath(config.output_dir)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    cols = _record_columns(config.statistics)
    started = time.time()
    results = []
    for sc in scenarios:
        fp = _fingerprint(config, sc)
        rec_path = out_dir / f"records_{sc.name}.csv"
        records = _load_records(rec_path, fp, cols) if write else {}
        todo = [r for r in range(config.n_replications) if r not in records]
        seeds = _replicate_seeds(sc, config.n_replications)
        # chunk boundaries are fixed by replicate index so results never depend on scheduling
        chunks = {}
        for r in todo:
            chunks.setdefault(r // PATH_CHUNK, []).append(r)

        sim_law = law
        if sc.alternative is not None and config.init is None:
            sim_law = build_law(get_model(sc.alternative.model, **sc.alternative.params))

        def work(chunk_rows, sc=sc, seeds=seeds, sim_law=sim_law):
            paths = _simulate_chunk(sc, config, model, sim_law, [seeds[r] for r in chunk_rows])
            rows = {}
            for r, p in zip(chunk_rows, paths):
                rec = _statistics_for_path(p, model, law, config.statistics)
                rec.update(replicate=r, seed=seeds[r])
                rows[r] = rec
            return rows

        if config.threads > 1:
            with ThreadPoolExecutor(config.threads) as pool:
                for rows in pool.map(work, chunks.values()):
                    records.update(rows)
        else:
            for rows in map(work, chunks.values()):
                records.update(rows)
        if write:
            _write_records(rec_path, fp, cols, records)

        values = {s: np.array([records[r][s] for r in range(config.n_replications)]) for s in config.statistics}
        rates = {}
        for s in config.statistics:
            for e in config.epsilons:
                k = int(np.sum(values[s] > tables[s].threshold(e)))
                n = config.n_replications
                lo, hi = binomial_ci(k, n)
                rates[(s, float(e))] = (k, n, k / n, lo, hi)
        results.append(ScenarioResult(sc, values, rates))

    report = StudyReport(study, results, {"seconds": time.time() - started, "threads": config.threads})
    if write:
        write_study_outputs(report, out_dir, config)
    return report


def write_study_outputs(report: StudyReport, out_dir: FsPath, config: ExperimentConfig) -> None:
    buf = io.StringIO()
    buf.write("scenario,statistic,epsilon,rejections,n,rate,ci_low,ci_high\n")
    for res in report.results:
        for (s, e), (k, n, rate, lo, hi) in sorted(res.rates.items()):
            buf.write(f"{res.scenario.name},{s},{float(e)!r},{k},{n},{float(rate)!r},{float(lo)!r},{float(hi)!r}\n")
    (out_dir / f"{report.study}_rates.csv").write_text(buf.getvalue())

    buf = io.StringIO()
    buf.write("scenario,statistic,bin_low,bin_high,count\n")
    for res in report.results:
        for s, v in sorted(res.values.items()):
            counts, edges = np.histogram(v, bins=30)
            for c, a, b in zip(counts, edges[:-1], edges[1:]):
                buf.write(f"{res.scenario.name},{s},{float(a)!r},{float(b)!r},{int(c)}\n")
    (out_dir / f"{report.study}_histograms.csv").write_text(buf.getvalue())

    meta = {
        "study": report.study,
        "runtime": report.runtime,
        "scenarios": [
            {"name": r.scenario.name, "T": r.scenario.T, "seed": r.scenario.seed, "theta0": r.scenario.theta0,
             "alternative": None if r.scenario.alternative is None else r.scenario.alternative.name}
            for r in report.results
        ],
        "config": {"model": config.model, "dt": config.dt, "n_replications": config.n_replications,
                   "epsilons": list(config.epsilons), "statistics": list(config.statistics)},
    }
    (out_dir / f"{report.study}_report.json").write_text(json.dumps(meta, indent=2) + "\n")


def size_scenarios(config: ExperimentConfig) -> list[Scenario]:
    out = []
    for i, (th, T) in enumerate((th, T) for th in config.theta0 for T in config.T):
        out.append(Scenario(f"size_theta{th:g}_T{T:g}", T, rng.derive_seed(config.seed, 0, i), theta0=th))
    return out


def power_scenarios(config: ExperimentConfig) -> list[Scenario]:
    if not config.alternatives:
        raise ConfigError("a power study needs at least one [[alternatives]] entry")
    for alt in config.alternatives:
        alt.drift()
    out = []
    for i, (alt, T) in enumerate((a, T) for a in config.alternatives for T in config.T):
        out.append(Scenario(f"power_{alt.name}_T{T:g}", T, rng.derive_seed(config.seed, 1, i), alternative=alt))
    return out


def run_size_study(config: ExperimentConfig, **kw) -> StudyReport:
    return run_scenarios("size", size_scenarios(config), config, **kw)


def run_power_study(config: ExperimentConfig, **kw) -> StudyReport:
    return run_scenarios("power", power_scenarios(config), config, **kw)


FIGURE_EPSILONS = tuple(round(0.01 * k, 2) for k in range(1, 51))


def density_curve(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian kernel density estimate (Scott bandwidth) of limit samples on ``grid``."""
    return gaussian_kde(samples)(grid)


def reproduce_ou_figures(delta: LimitSampleBatch, Delta: LimitSampleBatch, out_dir, *, n_points: int = 200) -> dict[str, FsPath]:
    """Density curves of both limit laws and their threshold-versus-epsilon curves as CSV."""
    if delta.kind != "delta" or Delta.kind != "Delta":
        raise TableError("figures need one 'delta' and one 'Delta' batch")
    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for batch in (delta, Delta):
        top = float(np.quantile(batch.samples, 0.999))
        grid = (np.arange(n_points) + 0.5) * top / n_points
        dens = density_curve(batch.samples, grid)
        path = out_dir / f"density_{batch.kind}.csv"
        path.write_text("bin_center,density\n" + "".join(f"{float(g)!r},{float(d)!r}\n" for g, d in zip(grid, dens)))
        files[f"density_{batch.kind}"] = path
    min_tail = int(min(delta.n_mc, Delta.n_mc) * min(FIGURE_EPSILONS))
    td = estimate_quantiles(delta, FIGURE_EPSILONS, min_tail=min(100, min_tail))
    tD = estimate_quantiles(Delta, FIGURE_EPSILONS, min_tail=min(100, min_tail))
    path = out_dir / "thresholds.csv"
    path.write_text("epsilon,d_eps,c_eps\n" + "".join(
        f"{float(e)!r},{float(a)!r},{float(b)!r}\n" for e, a, b in zip(td.epsilons, td.thresholds, tD.thresholds)))
    files["thresholds"] = path
    return files
