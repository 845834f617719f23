"""Shift-drift model families and numeric checks of their regularity conditions."""
from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DomainError

Drift = Callable[[np.ndarray], np.ndarray]

_FD_STEP = 1e-5
_FD_RTOL = 1e-4


@dataclass(frozen=True)
class ShiftDriftModel:
    """The family ``S(x) = S*(x - theta)`` for ``theta`` in the open interval ``theta_interval``.

    ``drift_star`` and ``drift_star_deriv`` must accept numpy arrays.
    """

    name: str
    drift_star: Drift
    drift_star_deriv: Drift
    theta_interval: tuple[float, float] = (-10.0, 10.0)
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = (float(v) for v in self.theta_interval)
        if not lo < 0.0 < hi:
            raise DomainError(f"theta interval must contain 0 in its interior, got ({lo}, {hi})")
        object.__setattr__(self, "theta_interval", (lo, hi))
        object.__setattr__(self, "params", dict(self.params))
        err = derivative_mismatch(self)
        if err > _FD_RTOL:
            raise DomainError(
                f"drift_star_deriv of model {self.name!r} disagrees with a central difference "
                f"of drift_star (relative error {err:.3g})"
            )

    def drift(self, x, theta: float = 0.0):
        return self.drift_star(np.asarray(x, dtype=float) - theta)

    @property
    def ref(self) -> str:
        """Identifier used to match quantile tables: the family name plus non-default parameters."""
        factory = REGISTRY.get(self.name)
        defaults = {}
        if factory is not None:
            defaults = {k: p.default for k, p in inspect.signature(factory).parameters.items()}
        extra = [f"{k}={v:g}" for k, v in sorted(self.params.items()) if defaults.get(k) != v]
        return self.name if not extra else f"{self.name}[{','.join(extra)}]"

    def with_interval(self, lo: float, hi: float) -> "ShiftDriftModel":
        return ShiftDriftModel(self.name, self.drift_star, self.drift_star_deriv, (lo, hi), self.params)


def derivative_mismatch(model: ShiftDriftModel, probe: np.ndarray | None = None) -> float:
    """Largest relative gap between ``drift_star_deriv`` and a central difference."""
    if probe is None:
        probe = np.linspace(-5.0, 5.0, 41)
    fd = (model.drift_star(probe + _FD_STEP) - model.drift_star(probe - _FD_STEP)) / (2 * _FD_STEP)
    d = np.asarray(model.drift_star_deriv(probe), dtype=float)
    return float(np.max(np.abs(fd - d) / np.maximum(1.0, np.abs(d))))


def _ou(rate: float = 1.0, theta_interval=(-10.0, 10.0)) -> ShiftDriftModel:
    if rate <= 0:
        raise DomainError("ou rate must be positive")
    return ShiftDriftModel(
        "ou",
        lambda x: -rate * x,
        lambda x: np.full(np.shape(x), -rate),
        theta_interval,
        {"rate": rate},
    )


def _cubic(scale: float = 1.0, theta_interval=(-10.0, 10.0)) -> ShiftDriftModel:
    if scale <= 0:
        raise DomainError("cubic scale must be positive")
    return ShiftDriftModel(
        "cubic",
        lambda x: -scale * x**3,
        lambda x: -3.0 * scale * x**2,
        theta_interval,
        {"scale": scale},
    )


def _tanh_damped(a: float = 1.0, b: float = 0.1, theta_interval=(-10.0, 10.0)) -> ShiftDriftModel:
    if a < 0 or b < 0 or a + b == 0:
        raise DomainError("tanh-damped needs a, b >= 0 and a + b > 0")
    return ShiftDriftModel(
        "tanh-damped",
        lambda x: -a * np.tanh(x) - b * x,
        lambda x: -a / np.cosh(x) ** 2 - b,
        theta_interval,
        {"a": a, "b": b},
    )


REGISTRY: dict[str, Callable[..., ShiftDriftModel]] = {
    "ou": _ou,
    "cubic": _cubic,
    "tanh-damped": _tanh_damped,
}


def get_model(name: str, **params) -> ShiftDriftModel:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise DomainError(f"unknown model {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)


def model_from_drift(drift: Drift, name: str = "custom", theta_interval=(-10.0, 10.0)) -> ShiftDriftModel:
    """Wrap a bare drift as a shift family, differentiating it numerically."""

    def deriv(x):
        x = np.asarray(x, dtype=float)
        return (drift(x + _FD_STEP) - drift(x - _FD_STEP)) / (2 * _FD_STEP)

    return ShiftDriftModel(name, drift, deriv, theta_interval)


@dataclass(frozen=True)
class ProbeGrid:
    L: float = 10.0
    n: int = 4001

    def __post_init__(self):
        if self.L < 10.0:
            raise DomainError("probe grid must cover at least [-10, 10]")
        if self.n < 3 or self.n % 2 == 0:
            raise DomainError("probe grid needs an odd number (>= 3) of points so that 0 is a node")

    def points(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)


@dataclass(frozen=True)
class ConditionReport:
    probe: ProbeGrid
    es_ok: bool
    es_constant: float
    a0_ok: bool
    tail_A: float
    tail_gamma: float
    fisher_positive: bool
    fisher_info: float
    separation_ok: bool
    separation_min: float
    separation_nu: float

    @property
    def all_ok(self) -> bool:
        return self.es_ok and self.a0_ok and self.fisher_positive and self.separation_ok

    def recheck(self, model: ShiftDriftModel) -> bool:
        """Re-evaluate the stored witnesses on the stored probe grid."""
        x = self.probe.points()
        s = model.drift_star(x)
        ok = True
        if self.es_ok:
            ok &= bool(np.all(x * s <= self.es_constant * (1 + x**2) + 1e-12))
        if self.a0_ok:
            out = np.abs(x) > self.tail_A
            ok &= bool(np.all(np.sign(x[out]) * s[out] < -self.tail_gamma))
        return ok


def _probe_density(x: np.ndarray, s: np.ndarray) -> np.ndarray | None:
    h = x[1] - x[0]
    c = x.size // 2
    log_p = np.empty_like(x)
    right = np.concatenate([[0.0], np.cumsum(0.5 * (s[c:-1] + s[c + 1:]) * h)])
    left = np.concatenate([[0.0], np.cumsum(0.5 * (s[c:0:-1] + s[c - 1::-1]) * -h)])
    log_p[c:] = 2 * right
    log_p[: c + 1] = 2 * left[::-1]
    if not np.all(np.isfinite(log_p)):
        return None
    p = np.exp(log_p - log_p.max())
    return p / (p.sum() * h)


def check_conditions(
    model: ShiftDriftModel,
    probe: ProbeGrid | None = None,
    *,
    nu: float = 0.1,
    fisher_tol: float = 1e-8,
    a0_floor: float = 1.0,
) -> ConditionReport:
    """Evaluate the growth, recurrence, identifiability and Fisher-information conditions on a grid.

    The recurrence witness ``A`` is the smallest grid point ``>= a0_floor`` beyond which
    ``sgn(x) S*(x)`` stays negative on the grid; ``gamma`` is half of the observed margin.
    """
    probe = probe or ProbeGrid()
    x = probe.points()
    h = x[1] - x[0]
    s = np.asarray(model.drift_star(x), dtype=float)
    finite = bool(np.all(np.isfinite(s)))

    es_constant = float(np.max(x * s / (1 + x**2))) if finite else np.inf
    es_constant = max(es_constant, 1e-12)
    es_ok = bool(finite and np.isfinite(es_constant))

    a0_ok = False
    tail_A, tail_gamma = np.nan, np.nan
    if finite:
        ax = np.abs(x)
        # margin(a) = min over grid |x| > a of -sgn(x) S*(x)
        order = np.argsort(-ax, kind="stable")
        neg = -np.sign(x[order]) * s[order]
        running = np.minimum.accumulate(neg)
        candidates = np.unique(ax[(ax >= a0_floor) & (ax < probe.L)])
        for a in candidates:
            k = np.searchsorted(-ax[order], -a, side="left")  # entries with |x| > a
            if k == 0:
                break
            margin = running[k - 1]
            if margin > 0:
                a0_ok = True
                tail_A, tail_gamma = float(a), float(margin / 2)
                break

    fisher_info = np.nan
    separation_min = np.nan
    fisher_positive = separation_ok = False
    p = _probe_density(x, s) if finite else None
    if p is not None:
        sd = np.asarray(model.drift_star_deriv(x), dtype=float)
        fisher_info = float(np.sum(sd**2 * p) * h)
        fisher_positive = bool(fisher_info > fisher_tol)
        lo, hi = model.theta_interval
        width = hi - lo
        taus = np.concatenate([np.linspace(-width, -nu, 60), np.linspace(nu, width, 60)])
        sep = np.array([np.sum((s - model.drift_star(x + t)) ** 2 * p) * h for t in taus])
        separation_min = float(sep.min())
        separation_ok = bool(separation_min > 0)

    return ConditionReport(
        probe=probe,
        es_ok=es_ok,
        es_constant=es_constant,
        a0_ok=a0_ok,
        tail_A=tail_A,
        tail_gamma=tail_gamma,
        fisher_positive=fisher_positive,
        fisher_info=fisher_info,
        separation_ok=separation_ok,
        separation_min=separation_min,
        separation_nu=nu,
    )
