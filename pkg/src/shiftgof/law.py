"""Invariant density, distribution function and Fisher information of a shift family.

Everything is tabulated on a uniform grid in centred coordinates (``theta = 0``);
the shifted law is obtained by evaluating at ``x - theta``. Between grid nodes the
density is not interpolated: the log-density is advanced from the node on the left
by a three-point Simpson rule on the drift, and ``F`` likewise by Simpson on ``f``
(then clamped to the cell's tabulated values so that ``F`` stays monotone).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConditionError, DomainError, TailTruncationError
from .models import ProbeGrid, ShiftDriftModel, check_conditions

SUPPORT_RTOL = 1e-12
_TINY_DENSITY = 1e-300


@dataclass(frozen=True, eq=False)
class InvariantLaw:
    model: ShiftDriftModel
    x_grid: np.ndarray
    log_density_unnorm: np.ndarray
    log_G: float
    f_vals: np.ndarray
    F_vals: np.ndarray
    I: float
    tail_A: float
    tail_gamma: float
    tail_C: float
    drift_vals: np.ndarray

    @property
    def model_ref(self) -> str:
        return self.model.ref

    @property
    def G(self) -> float:
        return float(np.exp(self.log_G))

    @property
    def L(self) -> float:
        return float(self.x_grid[-1])

    @property
    def h_x(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    @property
    def effective_support(self) -> tuple[float, float]:
        """Hull of ``{x : f(x) >= 1e-12 max f}`` on the grid (centred coordinates)."""
        keep = np.nonzero(self.f_vals >= SUPPORT_RTOL * self.f_vals.max())[0]
        return float(self.x_grid[keep[0]]), float(self.x_grid[keep[-1]])

    def tail_mass_bound(self) -> float:
        """Upper bound on the mass outside ``[-L, L]`` implied by the exponential tail."""
        g = self.tail_gamma
        return 2 * self.tail_C * np.exp(-2 * g * self.L) / (2 * g)

    def _cell(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index of the node at or left of ``x``, the offset from it, and an inside-grid mask."""
        g = self.x_grid
        i = np.clip(np.floor((x - g[0]) / self.h_x).astype(np.int64), 0, g.size - 2)
        inside = (x >= g[0]) & (x <= g[-1])
        return i, np.where(inside, x - g[i], 0.0), inside

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        i, d, inside = self._cell(x)
        left = self.x_grid[i]
        step = d / 6.0 * (self.drift_vals[i] + 4.0 * self.model.drift_star(left + d / 2) + self.model.drift_star(left + d))
        out = np.exp(self.log_density_unnorm[i] + 2.0 * step - self.log_G)
        return np.where(inside, out, 0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        i, d, inside = self._cell(x)
        left = self.x_grid[i]
        step = d / 6.0 * (self.f_vals[i] + 4.0 * self.density(left + d / 2) + self.density(left + d))
        out = np.clip(self.F_vals[i] + step, self.F_vals[i], self.F_vals[i + 1])
        return np.where(inside, out, np.where(x > self.x_grid[-1], 1.0, 0.0))

    def density_deriv(self, x) -> np.ndarray:
        """``f'(x) = 2 S*(x) f(x)``."""
        x = np.asarray(x, dtype=float)
        return 2.0 * self.model.drift_star(x) * self.density(x)

    def export_csv(self, path) -> None:
        lines = [
            f"# model={self.model_ref}",
            f"# G={float(self.G)!r} I={float(self.I)!r} A={float(self.tail_A)!r} gamma={float(self.tail_gamma)!r}",
            "x,f,F",
        ]
        lines += [f"{x:.17g},{f:.17g},{F:.17g}" for x, f, F in zip(self.x_grid, self.f_vals, self.F_vals)]
        FsPath(path).write_text("\n".join(lines) + "\n")


def default_L(tail_A: float, tail_gamma: float) -> float:
    return tail_A + max(20.0 / tail_gamma, 10.0)


def _cell_simpson(left: np.ndarray, mid: np.ndarray, right: np.ndarray, h: float) -> np.ndarray:
    return h / 6.0 * (left + 4.0 * mid + right)


def _integral_from_zero(drift, x: np.ndarray, c: int) -> np.ndarray:
    """``int_0^x S*`` at every node, one Simpson panel (with a midpoint evaluation) per cell."""
    h = x[1] - x[0]
    s = np.asarray(drift(x), dtype=float)
    cells = _cell_simpson(s[:-1], np.asarray(drift(x[:-1] + h / 2), dtype=float), s[1:], h)
    out = np.zeros_like(x)
    out[c + 1 :] = np.cumsum(cells[c:])
    out[:c] = -np.cumsum(cells[:c][::-1])[::-1]
    return out


def build_law(model: ShiftDriftModel, L: float | None = None, h_x: float | None = None) -> InvariantLaw:
    report = check_conditions(model, ProbeGrid())
    if not report.a0_ok:
        raise ConditionError(f"model {model.name!r} fails the recurrence condition on the probe grid")
    if L is None:
        L = default_L(report.tail_A, report.tail_gamma)
    if h_x is None:
        h_x = 1e-3 * L
    if L <= 0 or h_x <= 0 or h_x >= L:
        raise DomainError("need 0 < h_x < L")
    half = int(round(L / h_x))
    x = np.linspace(-half * h_x, half * h_x, 2 * half + 1)
    c = half

    s = np.asarray(model.drift_star(x), dtype=float)
    log_unnorm = 2.0 * _integral_from_zero(model.drift_star, x, c)
    if not np.all(np.isfinite(log_unnorm)):
        raise ConditionError(f"exp(2 int S*) is not finite for model {model.name!r}")
    top = log_unnorm.max()
    w = np.exp(log_unnorm - top)
    mass = trapezoid(w, x)
    log_G = float(top + np.log(mass))
    f = w / mass
    # f at cell midpoints from half-cell Simpson steps of the log-density
    h = x[1] - x[0]
    to_mid = _cell_simpson(s[:-1], np.asarray(model.drift_star(x[:-1] + h / 4), dtype=float),
                           np.asarray(model.drift_star(x[:-1] + h / 2), dtype=float), h / 2)
    f_mid = np.exp(log_unnorm[:-1] + 2.0 * to_mid - log_G)
    F = np.concatenate([[0.0], np.cumsum(_cell_simpson(f[:-1], f_mid, f[1:], h))])
    F = np.clip(F / F[-1], 0.0, 1.0)

    sd = np.asarray(model.drift_star_deriv(x), dtype=float)
    I = float(trapezoid(sd**2 * f, x))
    if not I > 0:
        raise ConditionError(f"Fisher information is not positive for model {model.name!r}")

    A, gamma = report.tail_A, report.tail_gamma
    out = np.abs(x) > A
    tail_C = float(np.max(f[out] * np.exp(2 * gamma * np.abs(x[out])))) if out.any() else 0.0

    for arr in (x, log_unnorm, f, F, s):
        arr.flags.writeable = False
    return InvariantLaw(model, x, log_unnorm, log_G, f, F, I, A, gamma, tail_C, s)


def density_at(law: InvariantLaw, x, theta: float = 0.0):
    return law.density(np.asarray(x, dtype=float) - theta)


def cdf_at(law: InvariantLaw, x, theta: float = 0.0):
    return law.cdf(np.asarray(x, dtype=float) - theta)


def inverse_cdf(law: InvariantLaw, p):
    """Quantile function in centred coordinates (table lookup, linear interpolation, two Newton steps)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 1e-9) or np.any(p_arr >= 1 - 1e-9):
        raise DomainError("inverse_cdf needs 1e-9 < p < 1 - 1e-9")
    F, x = law.F_vals, law.x_grid
    i = np.searchsorted(F, p_arr, side="left")
    f0, f1 = F[i - 1], F[i]
    out = x[i - 1] + (p_arr - f0) / (f1 - f0) * (x[i] - x[i - 1])
    for _ in range(2):  # Newton polish against the off-grid cdf, kept inside the bracketing cell
        out = np.clip(out - (law.cdf(out) - p_arr) / law.density(out), x[i - 1], x[i])
    return out if out.ndim else float(out)


def _checked_density(law: InvariantLaw, y: np.ndarray) -> np.ndarray:
    fy = law.density(y)
    if np.any(fy < _TINY_DENSITY):
        raise TailTruncationError("kernel evaluated where the invariant density underflows; restrict y")
    return fy


def kernel_M(law: InvariantLaw, y, x):
    """``M(y, x) = 2 f(x) (1{y > x} - F(y)) / f(y)``."""
    y, x = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(x, dtype=float))
    fy = _checked_density(law, y)
    return 2.0 * law.density(x) * ((y > x).astype(float) - law.cdf(y)) / fy


def kernel_H(law: InvariantLaw, z, x):
    """``H(z, x) = 2 (F(min(z, x)) - F(z) F(x)) / f(z)``."""
    z, x = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(x, dtype=float))
    fz = _checked_density(law, z)
    return 2.0 * (law.cdf(np.minimum(z, x)) - law.cdf(z) * law.cdf(x)) / fz
