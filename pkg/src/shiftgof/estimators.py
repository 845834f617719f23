"""Shift-parameter estimators and nonparametric estimates of the invariant law."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .law import InvariantLaw, cdf_at
from .models import ShiftDriftModel
from .simulate import Path

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_LIK_BLOCK = 4_000_000


@dataclass(frozen=True, eq=False)
class ShiftEstimate:
    theta_hat: float
    method: str
    objective_curve: np.ndarray | None  # shape (n, 2): theta, objective
    boundary_hit: bool


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    x_grid: np.ndarray
    values: np.ndarray
    kind: str


def log_likelihood(path: Path, model: ShiftDriftModel, theta):
    """Left-point Ito sums of the log-likelihood ratio; ``theta`` may be an array."""
    x = path.values[:-1]
    dx = np.diff(path.values)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty(th.size)
    step = max(1, _LIK_BLOCK // x.size)
    for i in range(0, th.size, step):
        s = model.drift_star(x[None, :] - th[i : i + step, None])
        out[i : i + step] = s @ dx - 0.5 * path.dt * np.einsum("ij,ij->i", s, s)
    if not np.all(np.isfinite(out)):
        from .errors import NumericalError

        raise NumericalError("log-likelihood is not finite")
    return out if np.ndim(theta) else float(out[0])


def golden_section(fun: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Minimise a unimodal ``fun`` on ``[a, b]`` until the bracket is shorter than ``tol``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return c if fc <= fd else d


def _scan_then_refine(objective_many, objective_one, lo, hi, n_grid, tol):
    grid = np.linspace(lo, hi, n_grid)
    vals = objective_many(grid)
    i = int(np.argmin(vals))  # first minimiser: ties go to the smaller theta
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    t = golden_section(objective_one, a, b, tol)
    best = t if objective_one(t) <= vals[i] else grid[i]
    h = grid[1] - grid[0]
    boundary = bool(min(best - lo, hi - best) < h)
    return float(best), np.column_stack([grid, vals]), boundary


def mle_shift(path: Path, model: ShiftDriftModel, *, n_grid: int = 201, tol: float = 1e-8) -> ShiftEstimate:
    lo, hi = model.theta_interval
    best, curve, boundary = _scan_then_refine(
        lambda th: -log_likelihood(path, model, th),
        lambda t: -log_likelihood(path, model, t),
        lo, hi, n_grid, tol,
    )
    curve[:, 1] *= -1
    return ShiftEstimate(best, "mle", curve, boundary)


def mde_window(path: Path, model: ShiftDriftModel, law: InvariantLaw) -> np.ndarray:
    """Law-grid nodes covering the path and the fitted CDF's transition zone for every admissible theta."""
    lo, hi = model.theta_interval
    s_lo, s_hi = law.effective_support
    left = min(path.values.min(), lo + s_lo)
    right = max(path.values.max(), hi + s_hi)
    g = law.x_grid
    keep = (g >= left - law.h_x) & (g <= right + law.h_x)
    return g[keep]


def mde_shift(
    path: Path,
    model: ShiftDriftModel,
    law: InvariantLaw,
    *,
    edf_values: CurveEstimate | None = None,
    n_grid: int = 201,
    tol: float = 1e-8,
) -> ShiftEstimate:
    """Minimum L2(dx) distance between the EDF and ``F(. - theta)``."""
    if edf_values is None:
        edf_values = edf(path, mde_window(path, model, law))
    x, Fh = edf_values.x_grid, edf_values.values

    def one(t):
        return float(trapezoid((Fh - cdf_at(law, x, t)) ** 2, x))

    def many(ts):
        return np.array([one(t) for t in ts])

    lo, hi = model.theta_interval
    best, curve, boundary = _scan_then_refine(many, one, lo, hi, n_grid, tol)
    return ShiftEstimate(best, "mde", curve, boundary)


def lte_density(path: Path, x_grid) -> CurveEstimate:
    """Local-time density estimate from the Tanaka identity with left-point Ito sums.

    Each step ``X_k -> X_{k+1}`` contributes ``2|X_{k+1} - x|`` at every ``x`` strictly between
    the two states, and ``|X_{k+1} - X_k|`` at ``x == X_k`` (``sgn(0) = 0``); this equals
    ``|X_T-x| - |X_0-x| - sum sgn(X_k-x) dX_k`` exactly and is accumulated in O(n log m).
    """
    xg = np.asarray(x_grid, dtype=float)
    a, b = path.values[:-1], path.values[1:]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    # on (lo, hi) the contribution is the line c0 + c1 x with sign set by the step direction
    c1 = np.where(b > a, -2.0, 2.0)
    c0 = -c1 * b
    start = np.searchsorted(xg, lo, side="right")
    stop = np.searchsorted(xg, hi, side="left")
    m = xg.size
    d0 = np.zeros(m + 1)
    d1 = np.zeros(m + 1)
    np.add.at(d0, start, c0)
    np.add.at(d0, stop, -c0)
    np.add.at(d1, start, c1)
    np.add.at(d1, stop, -c1)
    vals = np.cumsum(d0)[:m] + np.cumsum(d1)[:m] * xg
    vals[(xg <= path.values.min()) | (xg >= path.values.max())] = 0.0
    # grid nodes hit exactly by a left endpoint
    hit = np.searchsorted(xg, a)
    ok = (hit < m) & (a != b)
    ok[ok] &= xg[hit[ok]] == a[ok]
    if ok.any():
        np.add.at(vals, hit[ok], np.abs(b[ok] - a[ok]))
    return CurveEstimate(xg, vals / path.T, "lte")


def lte_density_direct(path: Path, x_grid) -> np.ndarray:
    """The Tanaka-formula expression evaluated term by term (O(n m); used as an oracle)."""
    xg = np.asarray(x_grid, dtype=float)
    X = path.values
    dx = np.diff(X)
    out = np.empty(xg.size)
    for j, x in enumerate(xg):
        out[j] = (abs(X[-1] - x) - abs(X[0] - x) - np.sign(X[:-1] - x) @ dx) / path.T
    return out


def edf(path: Path, x_grid) -> CurveEstimate:
    xg = np.asarray(x_grid, dtype=float)
    left = np.sort(path.values[:-1])
    counts = np.searchsorted(left, xg, side="left")  # number of X_k < x
    return CurveEstimate(xg, counts * path.dt / path.T, "edf")


def kernel_density(path: Path, x_grid, bandwidth: float | str = "sqrt_T") -> CurveEstimate:
    """Gaussian-kernel time average with bandwidth ``1/sqrt(T)`` by default."""
    xg = np.asarray(x_grid, dtype=float)
    h = 1.0 / np.sqrt(path.T) if bandwidth == "sqrt_T" else float(bandwidth)
    X = np.sort(path.values[:-1])
    out = np.zeros(xg.size)
    reach = 9.0 * h
    lo = np.searchsorted(X, xg - reach, side="left")
    hi = np.searchsorted(X, xg + reach, side="right")
    active = np.nonzero(hi > lo)[0]
    norm = path.dt / (path.T * h * np.sqrt(2 * np.pi))
    for j in active:
        z = (X[lo[j] : hi[j]] - xg[j]) / h
        out[j] = np.exp(-0.5 * z * z).sum() * norm
    return CurveEstimate(xg, out, "kernel")
