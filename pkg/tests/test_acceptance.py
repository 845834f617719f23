"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line (visible with or without ``-s``)
and then asserts.  Runtimes of the shared session fixtures are included where the criterion's
budget covers that work.
"""
from __future__ import annotations

import time

import numpy as np
from scipy.integrate import quad
from scipy.stats import ks_2samp, norm

from shiftgof.estimators import mle_shift
from shiftgof.gof import cvm_edf, cvm_kernel, cvm_lte, ks_statistics
from shiftgof.law import build_law, cdf_at, density_at
from shiftgof.limits import estimate_quantiles
from shiftgof.simulate import simulate_path, simulate_paths

OU = norm(scale=np.sqrt(0.5))
f, F = OU.pdf, OU.cdf


def announce(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}")


def test_criterion_01_fisher_information(capsys, ou_model):
    t0 = time.perf_counter()
    law = build_law(ou_model)
    elapsed = time.perf_counter() - t0
    ok = abs(law.I - 1.0) < 1e-6 and elapsed < 1.0
    announce(capsys, 1, ok, f"I = {law.I:.10f}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_invariant_density(capsys, ou_model):
    t0 = time.perf_counter()
    law = build_law(ou_model)
    f0 = float(law.density(0.0))
    # the tabulated density vanishes off its grid, so this range carries all the mass
    mass = quad(lambda x: float(law.density(x)), law.x_grid[0], law.x_grid[-1], points=[0.0], limit=400)[0]
    elapsed = time.perf_counter() - t0
    ok = abs(f0 - np.pi**-0.5) < 1e-6 and abs(mass - 1.0) < 1e-6 and elapsed < 1.0
    announce(capsys, 2, ok, f"f(0) - pi^-1/2 = {f0 - np.pi**-0.5:.2e}, mass - 1 = {mass - 1:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_03_mle_closed_form(capsys, ou_model, ou_law):
    t0 = time.perf_counter()
    paths = simulate_paths(ou_model, 0.0, 100.0, 0.01, list(range(100)), law=ou_law)
    gaps = []
    for p in paths:
        x = p.values
        closed = x[:-1].mean() + (x[-1] - x[0]) / p.T
        gaps.append(abs(mle_shift(p, ou_model).theta_hat - closed))
    elapsed = time.perf_counter() - t0
    ok = max(gaps) < 1e-3 and elapsed < 60
    announce(capsys, 3, ok, f"max |MLE - closed form| = {max(gaps):.2e} over 100 paths, {elapsed:.1f}s")
    assert ok


def test_criterion_04_mle_asymptotic_normality(capsys, ou_model, ou_law):
    t0 = time.perf_counter()
    T, theta0 = 100.0, 0.0
    z = np.empty(1000)
    for start in range(0, 1000, 100):
        for i, p in enumerate(simulate_paths(ou_model, theta0, T, 0.01, list(range(start, start + 100)), law=ou_law)):
            z[start + i] = np.sqrt(T) * (mle_shift(p, ou_model).theta_hat - theta0)
    elapsed = time.perf_counter() - t0
    v = float(np.var(z))
    ok = 0.8 <= v <= 1.2 and elapsed < 300
    announce(capsys, 4, ok, f"var sqrt(T)(theta_hat - theta0) = {v:.3f} (1000 reps, T=100), {elapsed:.1f}s")
    assert ok


def test_criterion_05_ito_isometry_and_covariance(capsys, inner_sums, seconds):
    t0 = time.perf_counter()

    def sq_integral(fun):
        return quad(fun, -8, 8, points=[0.0], limit=200)[0]

    # delta and Delta integrands at x = 0 (S*' = -1, I = 1, f'(0) = 0)
    exp_delta = sq_integral(lambda y: (2 * f(0) * (float(y > 0) - F(y)) / np.sqrt(f(y))) ** 2)
    exp_Delta = sq_integral(lambda y: (2 * (F(min(y, 0)) - F(y) * F(0)) / np.sqrt(f(y)) - np.sqrt(f(y)) * f(0)) ** 2)
    rel_delta = np.var(inner_sums[("delta", 0.0)]) / exp_delta - 1
    rel_Delta = np.var(inner_sums[("Delta", 0.0)]) / exp_Delta - 1
    cov_exp = 4 * f(-1) * f(1) * quad(
        lambda y: (float(y > -1) - F(y)) * (float(y > 1) - F(y)) / f(y), -8, 8, points=[-1, 1], limit=200)[0]
    cov_emp = np.cov(inner_sums[("eta", -1.0)], inner_sums[("eta", 1.0)])[0, 1]
    rel_cov = cov_emp / cov_exp - 1
    elapsed = seconds.get("inner_sums", 0.0) + time.perf_counter() - t0
    ok = abs(rel_delta) < 0.02 and abs(rel_Delta) < 0.02 and abs(rel_cov) < 0.05 and elapsed < 300
    announce(capsys, 5, ok, f"isometry rel err delta {rel_delta:+.4f}, Delta {rel_Delta:+.4f}; "
                            f"Cov(eta(-1), eta(1)) rel err {rel_cov:+.4f}; {elapsed:.1f}s")
    assert ok


def test_criterion_06_quantile_stability(capsys, limit_batch, seconds):
    t0 = time.perf_counter()
    out = {}
    for kind in ("delta", "Delta"):
        a = estimate_quantiles(limit_batch(kind, 1), [0.05]).threshold(0.05)
        b = estimate_quantiles(limit_batch(kind, 2), [0.05]).threshold(0.05)
        out[kind] = (a, b, abs(a - b) / max(a, b))
    elapsed = time.perf_counter() - t0 + sum(
        seconds.get(f"limit_batch[{k},{s}]", 0.0) for k in ("delta", "Delta") for s in (1, 2))
    ok = all(r < 0.02 for *_, r in out.values()) and elapsed < 600
    d, c = out["delta"], out["Delta"]
    announce(capsys, 6, ok, f"d_0.05 {d[0]:.4f} vs {d[1]:.4f} ({d[2]:.2%}); "
                            f"c_0.05 {c[0]:.4f} vs {c[1]:.4f} ({c[2]:.2%}); {elapsed:.1f}s")
    assert ok


def test_criterion_07_size(capsys, h0_study):
    rates = {(s, th): h0_study.rate(f"size_theta{th:g}_T200", s, 0.05)
             for s in ("delta_lte", "delta_edf") for th in (0.0, 3.0)}
    ok = all(0.02 <= r <= 0.10 for r in rates.values()) and all(
        abs(rates[(s, 0.0)] - rates[(s, 3.0)]) <= 0.04 for s in ("delta_lte", "delta_edf"))
    ok = ok and h0_study.runtime["seconds"] < 1800
    detail = ", ".join(f"{'psi' if s == 'delta_lte' else 'Psi'}(theta0={th:g}) = {r:.3f}" for (s, th), r in rates.items())
    announce(capsys, 7, ok, f"{detail}; {h0_study.runtime['seconds']:.0f}s")
    assert ok


def test_criterion_08_power(capsys, power_study):
    lines, ok = [], power_study.runtime["seconds"] < 1800
    for alt in ("ou2x", "cubic"):
        for s, label in (("delta_lte", "psi"), ("delta_edf", "Psi")):
            r = [power_study.rate(f"power_{alt}_T{T:g}", s, 0.05) for T in (50, 100, 200)]
            good = r[2] >= 0.95 and r[1] >= r[0] - 0.05 and r[2] >= r[1] - 0.05
            ok = ok and good
            lines.append(f"{alt}/{label} {r[0]:.3f}->{r[1]:.3f}->{r[2]:.3f}")
    announce(capsys, 8, ok, "power at T=50,100,200: " + ", ".join(lines))
    assert ok


def test_criterion_09_parameter_free_law(capsys, h0_study):
    out = {}
    for s in ("delta_lte", "delta_edf"):
        a = h0_study.values("size_theta0_T200", s)
        b = h0_study.values("size_theta3_T200", s)
        assert a.size == b.size == 500
        out[s] = ks_2samp(a, b).statistic
    ok = all(v < 0.1 for v in out.values()) and h0_study.runtime["seconds"] < 1800
    announce(capsys, 9, ok, f"KS distance theta0=0 vs 3: delta_T {out['delta_lte']:.3f}, Delta_T {out['delta_edf']:.3f}")
    assert ok


def test_criterion_10_perfect_fit_zeros(capsys, ou_model, ou_law):
    path = simulate_path(ou_model, 1.3, 200.0, 0.01, seed=10)
    t0 = time.perf_counter()
    f_hook = lambda x, th: density_at(ou_law, x, th)
    F_hook = lambda x, th: cdf_at(ou_law, x, th)
    values = {
        "delta_T": cvm_lte(path, ou_model, ou_law, curve_hook=f_hook).statistic_value,
        "Delta_T": cvm_edf(path, ou_model, ou_law, curve_hook=F_hook).statistic_value,
        "mu_T": cvm_kernel(path, ou_model, ou_law, curve_hook=f_hook).statistic_value,
    }
    omega, Omega = ks_statistics(path, ou_model, ou_law, density_hook=f_hook, cdf_hook=F_hook)
    values["omega_T"], values["Omega_T"] = omega.statistic_value, Omega.statistic_value
    elapsed = time.perf_counter() - t0
    ok = all(v == 0.0 for v in values.values()) and elapsed < 1.0
    announce(capsys, 10, ok, ", ".join(f"{k} = {v:g}" for k, v in values.items()) + f"; {elapsed:.2f}s")
    assert ok

