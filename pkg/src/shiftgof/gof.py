"""Cramer-von Mises and Kolmogorov-Smirnov statistics and the threshold decision."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DomainError, TableError
from .estimators import edf, kernel_density, lte_density, mde_shift, mle_shift
from .law import InvariantLaw, cdf_at, density_at
from .models import ShiftDriftModel
from .simulate import Path

KINDS = ("delta_lte", "delta_edf", "mu_kernel", "ks_lte", "ks_edf")
TABLE_KIND = {"delta_lte": "delta", "delta_edf": "Delta", "mu_kernel": "mu"}

# (x_grid, theta_hat) -> curve; replaces the nonparametric estimate (test harness)
CurveHook = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class TestReport:
    kind: str
    statistic_value: float
    theta_hat: float
    model_ref: str = ""
    threshold: float | None = None
    epsilon: float | None = None
    reject: bool | None = None
    tail_bound: float = 0.0

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown statistic kind {self.kind!r}")
        if not self.statistic_value >= 0:
            raise DomainError("statistic values are nonnegative")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.statistic_value,
            "theta_hat": self.theta_hat,
            "threshold": self.threshold,
            "epsilon": self.epsilon,
            "reject": self.reject,
        }


def statistic_window(path: Path, law: InvariantLaw, theta_hat: float) -> np.ndarray:
    """The law grid centred at ``theta_hat``, extended by one node beyond the path if needed."""
    x = law.x_grid + theta_hat
    lo, hi = path.values.min(), path.values.max()
    extra = [v for v, out in ((lo - law.h_x, lo < x[0]), (hi + law.h_x, hi > x[-1])) if out]
    return np.sort(np.concatenate([x, extra])) if extra else x


def _exp_tail(law: InvariantLaw, dist: float, power: int) -> float:
    """``int_dist^inf (C e^{-2 gamma u})^power du`` when ``dist`` exceeds the tail threshold."""
    if dist <= law.tail_A:
        return np.inf
    rate = 2 * law.tail_gamma * power
    return law.tail_C**power * np.exp(-rate * dist) / rate


def _tail_bound(path: Path, law: InvariantLaw, x: np.ndarray, theta_hat: float, density: bool) -> float:
    # outside the window the estimate is exactly 0 (left) or 0/1 (right), so the integrand is
    # the fitted curve (or its complement) squared
    d_left, d_right = theta_hat - x[0], x[-1] - theta_hat
    if density:
        return path.T * (_exp_tail(law, d_left, 2) + _exp_tail(law, d_right, 2))
    g = 2 * law.tail_gamma
    return path.T * (_exp_tail(law, d_left, 2) + _exp_tail(law, d_right, 2)) / g**2


def _fit_theta(path, model, law, theta_hat, method):
    if theta_hat is not None:
        return float(theta_hat)
    if method == "mle":
        return mle_shift(path, model).theta_hat
    return mde_shift(path, model, law).theta_hat


def breakpoint_grid(path: Path, law: InvariantLaw, theta_hat: float) -> np.ndarray:
    """Window nodes merged with the path states, interleaved with the midpoints of every piece.

    Between consecutive breakpoints the EDF is constant and the local-time estimate is linear,
    so one Simpson panel per piece integrates them (against the smooth fitted law) essentially exactly.
    """
    b = np.unique(np.concatenate([statistic_window(path, law, theta_hat), path.values]))
    z = np.empty(2 * b.size - 1)
    z[0::2] = b
    z[1::2] = 0.5 * (b[1:] + b[:-1])
    return z


def piecewise_l2(z: np.ndarray, est: np.ndarray, fit: np.ndarray, step: bool) -> float:
    """Simpson sum of ``(est - fit)**2`` over the pieces of :func:`breakpoint_grid`.

    With ``step=True`` the estimate is constant on each open piece, so its midpoint
    value is used at both panel ends.
    """
    mid = est[1::2] - fit[1::2]
    if step:
        left, right = est[1::2] - fit[:-2:2], est[1::2] - fit[2::2]
    else:
        left, right = est[:-2:2] - fit[:-2:2], est[2::2] - fit[2::2]
    h = z[2::2] - z[:-2:2]
    return float(np.sum(h / 6.0 * (left**2 + 4.0 * mid**2 + right**2)))


def _cvm(kind, path, model, law, theta_hat, curve_hook, estimator, fitted, density, method):
    th = _fit_theta(path, model, law, theta_hat, method)
    z = breakpoint_grid(path, law, th)
    est = curve_hook(z, th) if curve_hook else estimator(path, z).values
    step = curve_hook is None and not density
    value = path.T * piecewise_l2(z, est, fitted(law, z, th), step)
    return TestReport(kind, value, th, model.ref, tail_bound=float(_tail_bound(path, law, z[0::2], th, density)))


def cvm_lte(path: Path, model: ShiftDriftModel, law: InvariantLaw, *,
            theta_hat: float | None = None, curve_hook: CurveHook | None = None) -> TestReport:
    """``T * int (f_T(x) - f(x - theta_hat))^2 dx`` with the local-time estimate and the MLE."""
    return _cvm("delta_lte", path, model, law, theta_hat, curve_hook, lte_density, density_at, True, "mle")


def cvm_edf(path: Path, model: ShiftDriftModel, law: InvariantLaw, *,
            theta_hat: float | None = None, curve_hook: CurveHook | None = None) -> TestReport:
    return _cvm("delta_edf", path, model, law, theta_hat, curve_hook, edf, cdf_at, False, "mle")


def cvm_kernel(path: Path, model: ShiftDriftModel, law: InvariantLaw, *,
               theta_hat: float | None = None, curve_hook: CurveHook | None = None) -> TestReport:
    """Kernel density estimate against the law fitted by minimum distance."""
    return _cvm("mu_kernel", path, model, law, theta_hat, curve_hook, kernel_density, density_at, True, "mde")


def ks_statistics(path: Path, model: ShiftDriftModel, law: InvariantLaw, *,
                  theta_hat: float | None = None,
                  density_hook: CurveHook | None = None,
                  cdf_hook: CurveHook | None = None) -> tuple[TestReport, TestReport]:
    th = _fit_theta(path, model, law, theta_hat, "mle")
    x = breakpoint_grid(path, law, th)
    root_t = np.sqrt(path.T)
    f_est = density_hook(x, th) if density_hook else lte_density(path, x).values
    F_est = cdf_hook(x, th) if cdf_hook else edf(path, x).values
    omega = root_t * float(np.max(np.abs(f_est - density_at(law, x, th))))
    Omega = root_t * float(np.max(np.abs(F_est - cdf_at(law, x, th))))
    return TestReport("ks_lte", omega, th, model.ref), TestReport("ks_edf", Omega, th, model.ref)


def decide(report: TestReport, table, epsilon: float) -> TestReport:
    """Reject iff the statistic strictly exceeds the tabulated ``1 - epsilon`` quantile."""
    want = TABLE_KIND.get(report.kind)
    if want is None:
        raise TableError(f"no limit law is tabulated for {report.kind!r}")
    if table.kind != want:
        raise TableError(f"statistic {report.kind!r} needs a {want!r} table, got {table.kind!r}")
    if report.model_ref and table.model_ref != report.model_ref:
        raise TableError(f"table is for model {table.model_ref!r}, statistic for {report.model_ref!r}")
    threshold = table.threshold(epsilon)
    return replace(report, threshold=threshold, epsilon=float(epsilon),
                   reject=bool(report.statistic_value > threshold))
