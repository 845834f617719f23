"""Euler-Maruyama trajectories of ``dX = S(X) dt + dW``."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Callable, Sequence

import numpy as np

from . import rng
from .errors import DomainError, SimulationDiverged
from .law import InvariantLaw, build_law, inverse_cdf
from .models import ShiftDriftModel, check_conditions, model_from_drift

DIVERGENCE_BOUND = 1e6

_NOISE_STREAM = 0
_INIT_STREAM = 1


@dataclass(frozen=True, eq=False)
class Path:
    dt: float
    values: np.ndarray
    theta_true: float | None = None
    seed: int | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise DomainError("a path needs at least two observations")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> float:
        return self.dt * (self.values.size - 1)

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    def shifted(self, c: float) -> "Path":
        theta = None if self.theta_true is None else self.theta_true + c
        return Path(self.dt, self.values + c, theta, self.seed)

    def to_csv(self, path) -> None:
        theta = "NA" if self.theta_true is None else f"{self.theta_true:.17g}"
        seed = "NA" if self.seed is None else str(self.seed)
        lines = [f"# dt={self.dt:.17g} theta0={theta} seed={seed}"]
        lines += [f"{v:.17g}" for v in self.values]
        FsPath(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Path":
        text = FsPath(path).read_text().splitlines()
        if not text or not text[0].startswith("#"):
            raise DomainError(f"{path}: missing '# dt=... theta0=... seed=...' header")
        meta = dict(tok.split("=", 1) for tok in text[0][1:].split())
        try:
            dt = float(meta["dt"])
            theta = None if meta.get("theta0", "NA") == "NA" else float(meta["theta0"])
            seed = None if meta.get("seed", "NA") == "NA" else int(meta["seed"])
        except (KeyError, ValueError) as exc:
            raise DomainError(f"{path}: malformed header {text[0]!r}") from exc
        values = np.array([float(v) for v in text[1:] if v.strip()])
        return cls(dt, values, theta, seed)


@dataclass(frozen=True)
class InitRule:
    kind: str
    x0: float | None = None

    @classmethod
    def fixed(cls, x0: float) -> "InitRule":
        return cls("fixed", float(x0))

    @classmethod
    def stationary(cls) -> "InitRule":
        return cls("stationary")

    def __post_init__(self):
        if self.kind not in ("fixed", "stationary"):
            raise DomainError(f"unknown init rule {self.kind!r}")
        if self.kind == "fixed" and self.x0 is None:
            raise DomainError("fixed init needs x0")


STATIONARY = InitRule.stationary()


def _n_steps(T: float, dt: float) -> int:
    if not dt > 0:
        raise DomainError("dt must be positive")
    if T < 10 * dt:
        raise DomainError("T must be at least 10 dt")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise DomainError(f"T={T} is not a whole number of steps of dt={dt}")
    return n


def _initial_states(init: InitRule, seeds: Sequence[int], law: InvariantLaw | None, center: float) -> np.ndarray:
    if init.kind == "fixed":
        return np.full(len(seeds), init.x0)
    u = np.array([rng.uniforms(s, 0, 1, stream=_INIT_STREAM)[0] for s in seeds])
    return center + inverse_cdf(law, np.clip(u, 2e-9, 1 - 2e-9))


def euler_maruyama(
    drift: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    n_steps: int,
    dt: float,
    noise: np.ndarray,
) -> np.ndarray:
    """Run the recursion for a batch of trajectories; ``noise`` has shape ``(batch, n_steps)``."""
    x = np.array(x0, dtype=float)
    out = np.empty((x.size, n_steps + 1))
    out[:, 0] = x
    sqdt = np.sqrt(dt)
    for k in range(n_steps):
        x = x + drift(x) * dt + sqdt * noise[:, k]
        bad = ~(np.abs(x) <= DIVERGENCE_BOUND)
        if bad.any():
            j = int(np.argmax(bad))
            raise SimulationDiverged(k + 1, replicate=j, value=float(x[j]))
        out[:, k + 1] = x
    return out


def _noise(seeds: Sequence[int], n: int, enabled: bool) -> np.ndarray:
    if not enabled:
        return np.zeros((len(seeds), n))
    return np.stack([rng.normals(s, 0, n, stream=_NOISE_STREAM) for s in seeds])


def simulate_paths(
    model: ShiftDriftModel,
    theta0: float,
    T: float,
    dt: float,
    seeds: Sequence[int],
    init: InitRule = STATIONARY,
    *,
    law: InvariantLaw | None = None,
    noise: bool = True,
) -> list[Path]:
    """Simulate one trajectory per seed under ``S(x) = S*(x - theta0)``.

    Paths for a given seed do not depend on which other seeds share the batch.
    """
    lo, hi = model.theta_interval
    if not lo <= theta0 <= hi:
        raise DomainError(f"theta0={theta0} outside [{lo}, {hi}]")
    n = _n_steps(T, dt)
    if init.kind == "stationary" and law is None:
        law = build_law(model)
    x0 = _initial_states(init, seeds, law, theta0)
    values = euler_maruyama(lambda x: model.drift_star(x - theta0), x0, n, dt, _noise(seeds, n, noise))
    return [Path(dt, v, theta0, int(s)) for v, s in zip(values, seeds)]


def simulate_path(
    model: ShiftDriftModel,
    theta0: float,
    T: float,
    dt: float,
    seed: int,
    init: InitRule = STATIONARY,
    *,
    law: InvariantLaw | None = None,
    noise: bool = True,
) -> Path:
    report = check_conditions(model)
    if not (report.es_ok and report.a0_ok):
        raise DomainError(f"model {model.name!r} fails the growth/recurrence conditions")
    return simulate_paths(model, theta0, T, dt, [seed], init, law=law, noise=noise)[0]


def alternative_paths(
    drift: Callable[[np.ndarray], np.ndarray],
    T: float,
    dt: float,
    seeds: Sequence[int],
    init: InitRule = STATIONARY,
    *,
    law: InvariantLaw | None = None,
    noise: bool = True,
) -> list[Path]:
    """Trajectories under an arbitrary drift ``S`` (not necessarily of shift form)."""
    n = _n_steps(T, dt)
    if init.kind == "stationary" and law is None:
        law = build_law(model_from_drift(drift, "alternative"))
    x0 = _initial_states(init, seeds, law, 0.0)
    values = euler_maruyama(drift, x0, n, dt, _noise(seeds, n, noise))
    return [Path(dt, v, None, int(s)) for v, s in zip(values, seeds)]


def alternative_path(
    drift: Callable[[np.ndarray], np.ndarray],
    T: float,
    dt: float,
    seed: int,
    init: InitRule = STATIONARY,
    *,
    law: InvariantLaw | None = None,
    noise: bool = True,
) -> Path:
    report = check_conditions(model_from_drift(drift, "alternative"))
    if not (report.es_ok and report.a0_ok):
        raise DomainError("alternative drift fails the growth/recurrence conditions")
    return alternative_paths(drift, T, dt, [seed], init, law=law, noise=noise)[0]
