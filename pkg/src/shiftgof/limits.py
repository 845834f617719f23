"""Monte Carlo for the parameter-free limit laws and their quantile tables.

A limit variable is ``int (int Phi(y, x) dW(y))^2 dx`` with ``W`` a two-sided Wiener
process. The y-axis is cut into cells of width ``h`` on each side of the origin; the
positive and negative halves draw their increments from independent substreams keyed by
``(seed, replicate)``, and ``Phi`` is evaluated at cell midpoints. One draw of the
increments is shared by every ``x`` of a replicate.

Integrands (``F``, ``f`` the centred law, ``I`` the Fisher information):

* ``delta``: ``2 f(x)(1{y>x} - F(y))/sqrt f(y) + S*'(y) sqrt f(y) f'(x) / I``
* ``Delta``: ``2 (F(y^x) - F(y)F(x))/sqrt f(y) + S*'(y) sqrt f(y) f(x) / I``
* ``mu``:    the ``delta`` density part plus ``g(y) f'(x)``, where ``int g dW`` is the
  linearised minimum-distance estimator ``-int eta_F(z) f(z) dz / int f^2``.
"""
from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from . import rng
from .errors import DomainError, NumericalError, TableError
from .law import InvariantLaw

LIMIT_KINDS = ("delta", "Delta", "mu")
FORMAT_VERSION = 1
CHUNK = 1024
_POS_STREAM, _NEG_STREAM = 0, 1


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    h: float

    def __post_init__(self):
        if not (self.lo < 0 < self.hi and self.h > 0):
            raise DomainError(f"grid needs lo < 0 < hi and h > 0, got {self}")

    def __str__(self):
        return f"{float(self.lo)!r}:{float(self.hi)!r}:{float(self.h)!r}"

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        lo, hi, h = (float(v) for v in text.split(":"))
        return cls(lo, hi, h)

    @property
    def n_neg(self) -> int:
        return int(math.ceil(-self.lo / self.h - 1e-9))

    @property
    def n_pos(self) -> int:
        return int(math.ceil(self.hi / self.h - 1e-9))

    def cell_midpoints(self) -> np.ndarray:
        """Ascending midpoints of the y-cells: the negative half first, then the positive half."""
        neg = -(np.arange(self.n_neg)[::-1] + 0.5) * self.h
        pos = (np.arange(self.n_pos) + 0.5) * self.h
        return np.concatenate([neg, pos])

    def nodes(self) -> np.ndarray:
        return np.arange(-self.n_neg, self.n_pos + 1) * self.h

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_neg + self.n_pos + 1, self.h)
        w[0] = w[-1] = self.h / 2
        return w


def default_grids(law: InvariantLaw) -> tuple[GridSpec, GridSpec]:
    lo, hi = law.effective_support
    h = min(1e-2, law.L / 2000)
    g = GridSpec(lo, hi, h)
    return g, g


def _check_grid(law: InvariantLaw, grid: GridSpec, label: str):
    s_lo, s_hi = law.effective_support
    eps = grid.h
    if grid.lo < s_lo - eps or grid.hi > s_hi + eps:
        raise DomainError(f"{label} {grid} extends beyond the effective support [{s_lo}, {s_hi}]")


def wiener_increments(seed: int, indices: Sequence[int], y_grid: GridSpec) -> np.ndarray:
    """Increments of the two-sided Wiener process on the y-cells, one row per replicate."""
    n_neg, n_pos = y_grid.n_neg, y_grid.n_pos
    out = np.empty((len(indices), n_neg + n_pos))
    for row, r in enumerate(indices):
        # W2 runs outward from the origin, so its first increment is the cell next to 0
        out[row, :n_neg] = rng.normals(seed, r, n_neg, stream=_NEG_STREAM)[::-1]
        out[row, n_neg:] = rng.normals(seed, r, n_pos, stream=_POS_STREAM)
    out *= np.sqrt(y_grid.h)
    return out


def eta_integrand(law: InvariantLaw, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``M(y, x) sqrt f(y)``: the local-time fluctuation field."""
    Y, X = y[:, None], x[None, :]
    sf = np.sqrt(law.density(Y))
    return 2.0 * law.density(X) * ((Y > X).astype(float) - law.cdf(Y)) / sf


def eta_edf_integrand(law: InvariantLaw, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``H(y, x) sqrt f(y)``: the empirical-distribution fluctuation field."""
    Y, X = y[:, None], x[None, :]
    sf = np.sqrt(law.density(Y))
    return 2.0 * (law.cdf(np.minimum(Y, X)) - law.cdf(Y) * law.cdf(X)) / sf


def score_integrand(law: InvariantLaw, y: np.ndarray) -> np.ndarray:
    """``S*'(y) sqrt f(y)``; its Wiener integral is the limiting normalised score."""
    return law.model.drift_star_deriv(y) * np.sqrt(law.density(y))


def mde_integrand(law: InvariantLaw, y: np.ndarray, z_grid: GridSpec | None = None) -> np.ndarray:
    """``g(y)`` such that ``int g dW`` is the limit of ``sqrt(T)(theta* - theta0)``."""
    if z_grid is None:
        z_grid = default_grids(law)[1]
    z, w = z_grid.nodes(), z_grid.trapezoid_weights()
    fz = law.density(z)
    num = eta_edf_integrand(law, y, z) @ (w * fz)
    return -num / float(w @ (fz * fz))


def mde_variance(law: InvariantLaw, y_grid: GridSpec | None = None) -> float:
    """Asymptotic variance of the minimum-distance shift estimator."""
    y_grid = y_grid or default_grids(law)[0]
    g = mde_integrand(law, y_grid.cell_midpoints())
    return float(np.sum(g * g) * y_grid.h)


def integrand(kind: str, law: InvariantLaw, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``Phi(y, x)`` for a limit kind, shape ``(len(y), len(x))``."""
    if kind == "delta":
        corr = score_integrand(law, y)[:, None] * law.density_deriv(x)[None, :] / law.I
        return eta_integrand(law, y, x) + corr
    if kind == "Delta":
        corr = score_integrand(law, y)[:, None] * law.density(x)[None, :] / law.I
        return eta_edf_integrand(law, y, x) + corr
    if kind == "mu":
        corr = mde_integrand(law, y)[:, None] * law.density_deriv(x)[None, :]
        return eta_integrand(law, y, x) + corr
    raise DomainError(f"unknown limit kind {kind!r}; expected one of {LIMIT_KINDS}")


@dataclass(frozen=True, eq=False)
class LimitSampleBatch:
    kind: str
    model_ref: str
    samples: np.ndarray
    y_grid: GridSpec
    x_grid: GridSpec
    seed: int
    start: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or not np.all(np.isfinite(s)) or np.any(s < 0):
            raise TableError("limit samples must be a finite nonnegative vector")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def n_mc(self) -> int:
        return self.samples.size

    @property
    def grid_text(self) -> str:
        return f"y={self.y_grid};x={self.x_grid}"

    def save(self, path) -> None:
        body = _header(self.kind, self.model_ref, self.n_mc, self.seed, self.grid_text)
        body.append(f"start={self.start}")
        body.append("sample")
        body += [f"{v:.17g}" for v in self.samples]
        _write_with_crc(path, body)

    @classmethod
    def load(cls, path) -> "LimitSampleBatch":
        meta, rows = _read_with_crc(path, "sample")
        y_text, x_text = _split_grid(meta["grid"])
        samples = np.array([float(r) for r in rows])
        if samples.size != int(meta["n_mc"]):
            raise TableError(f"{path}: n_mc={meta['n_mc']} but {samples.size} samples")
        return cls(meta["kind"], meta["model"], samples, GridSpec.parse(y_text), GridSpec.parse(x_text),
                   int(meta["seed"]), int(meta.get("start", 0)))


def merge_batches(batches: Sequence[LimitSampleBatch]) -> LimitSampleBatch:
    """Concatenate shards in replicate order; the result does not depend on the input order."""
    if not batches:
        raise TableError("nothing to merge")
    ordered = sorted(batches, key=lambda b: b.start)
    head = ordered[0]
    pos = head.start
    for b in ordered:
        if (b.kind, b.model_ref, b.seed, str(b.y_grid), str(b.x_grid)) != (
            head.kind, head.model_ref, head.seed, str(head.y_grid), str(head.x_grid)
        ):
            raise TableError("cannot merge batches with different metadata")
        if b.start != pos:
            raise TableError(f"shards are not contiguous: expected start {pos}, got {b.start}")
        pos += b.n_mc
    return LimitSampleBatch(head.kind, head.model_ref, np.concatenate([b.samples for b in ordered]),
                            head.y_grid, head.x_grid, head.seed, head.start)


def simulate_limit(
    kind: str,
    law: InvariantLaw,
    n_mc: int,
    seed: int,
    y_grid: GridSpec | None = None,
    x_grid: GridSpec | None = None,
    *,
    start: int = 0,
    threads: int = 1,
    phi: np.ndarray | None = None,
) -> LimitSampleBatch:
    """Draw ``n_mc`` replicates (indices ``start .. start + n_mc - 1``) of a limit variable.

    ``phi`` overrides the integrand matrix (test harness). Chunks are aligned to fixed
    replicate-index boundaries so that sharding and thread count cannot change any value.
    """
    if kind not in LIMIT_KINDS:
        raise DomainError(f"unknown limit kind {kind!r}")
    if n_mc < 1:
        raise DomainError("n_mc must be positive")
    dy, dx = default_grids(law)
    y_grid, x_grid = y_grid or dy, x_grid or dx
    _check_grid(law, y_grid, "y grid")
    _check_grid(law, x_grid, "x grid")
    x = x_grid.nodes()
    w = x_grid.trapezoid_weights()
    if phi is None:
        phi = integrand(kind, law, y_grid.cell_midpoints(), x)

    stop = start + n_mc
    bounds = []
    lo = start
    while lo < stop:
        hi = min(stop, (lo // CHUNK + 1) * CHUNK)
        bounds.append((lo, hi))
        lo = hi

    def run(b):
        idx = range(b[0], b[1])
        vals = ((wiener_increments(seed, idx, y_grid) @ phi) ** 2) @ w
        bad = ~np.isfinite(vals)
        if bad.any():
            raise NumericalError(f"non-finite limit sample at replicate {b[0] + int(np.argmax(bad))}")
        return vals

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return LimitSampleBatch(kind, law.model_ref, np.concatenate(parts), y_grid, x_grid, int(seed), start)


@dataclass(frozen=True)
class QuantileTable:
    kind: str
    model_ref: str
    epsilons: tuple[float, ...]
    thresholds: tuple[float, ...]
    n_mc: int
    seed: int
    grid: str

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        thr = tuple(float(t) for t in self.thresholds)
        if len(eps) != len(thr) or not eps:
            raise TableError("epsilons and thresholds must be non-empty and of equal length")
        order = np.argsort(eps)
        eps = tuple(eps[i] for i in order)
        thr = tuple(thr[i] for i in order)
        if any(not 0 < e < 1 for e in eps):
            raise TableError("epsilons must lie in (0, 1)")
        if any(t <= 0 for t in thr):
            raise TableError("thresholds must be positive")
        if any(b > a for a, b in zip(thr, thr[1:])):
            raise TableError("thresholds must be nonincreasing in epsilon")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "thresholds", thr)

    def threshold(self, epsilon: float) -> float:
        for e, t in zip(self.epsilons, self.thresholds):
            if abs(e - epsilon) <= 1e-12:
                return t
        raise TableError(f"epsilon={epsilon} is not tabulated; available: {list(self.epsilons)}")

    def save(self, path) -> None:
        body = _header(self.kind, self.model_ref, self.n_mc, self.seed, self.grid)
        body.append("epsilon,threshold")
        body += [f"{float(e)!r},{float(t)!r}" for e, t in zip(self.epsilons, self.thresholds)]
        _write_with_crc(path, body)

    @classmethod
    def load(cls, path) -> "QuantileTable":
        meta, rows = _read_with_crc(path, "epsilon,threshold")
        try:
            pairs = [tuple(float(v) for v in r.split(",")) for r in rows]
            eps, thr = zip(*pairs)
        except ValueError as exc:
            raise TableError(f"{path}: malformed row") from exc
        return cls(meta["kind"], meta["model"], eps, thr, int(meta["n_mc"]), int(meta["seed"]), meta["grid"])


save_table = QuantileTable.save


def load_table(path) -> QuantileTable:
    return QuantileTable.load(path)


def estimate_quantiles(batch: LimitSampleBatch, epsilons: Sequence[float], *, min_tail: int = 100) -> QuantileTable:
    """Upper empirical quantiles: the order statistic of rank ``ceil(n (1 - eps))``.

    ``min_tail`` is the smallest acceptable expected number of samples above the quantile.
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise DomainError("no epsilons requested")
    n = batch.n_mc
    if n < min_tail / min(eps):
        raise TableError(f"n_mc={n} is too small for epsilon={min(eps)} (need >= {min_tail / min(eps):.0f})")
    s = np.sort(batch.samples)
    # the 1e-9 guard keeps n*(1-eps) from rounding up past an integer
    ranks = [max(1, math.ceil(n * (1 - e) - 1e-9)) for e in eps]
    thr = [float(s[r - 1]) for r in ranks]
    return QuantileTable(batch.kind, batch.model_ref, eps, thr, n, batch.seed, batch.grid_text)


def _header(kind, model_ref, n_mc, seed, grid) -> list[str]:
    return [f"version={FORMAT_VERSION}", f"kind={kind}", f"model={model_ref}",
            f"n_mc={n_mc}", f"seed={seed}", f"grid={grid}"]


def _write_with_crc(path, body: list[str]) -> None:
    text = "\n".join(body) + "\n"
    crc = zlib.crc32(text.encode()) & 0xFFFFFFFF
    FsPath(path).write_text(text + f"crc32={crc:08x}\n")


def _read_with_crc(path, columns: str) -> tuple[dict, list[str]]:
    lines = FsPath(path).read_text().splitlines()
    if not lines or not lines[-1].startswith("crc32="):
        raise TableError(f"{path}: missing crc32 trailer")
    body = "\n".join(lines[:-1]) + "\n"
    if f"{zlib.crc32(body.encode()) & 0xFFFFFFFF:08x}" != lines[-1][6:]:
        raise TableError(f"{path}: checksum mismatch")
    meta = {}
    i = 0
    while i < len(lines) - 1 and lines[i] != columns:
        key, sep, value = lines[i].partition("=")
        if not sep:
            raise TableError(f"{path}: malformed header line {lines[i]!r}")
        meta[key] = value
        i += 1
    if meta.get("version") != str(FORMAT_VERSION):
        raise TableError(f"{path}: unsupported version {meta.get('version')!r}")
    for key in ("kind", "model", "n_mc", "seed", "grid"):
        if key not in meta:
            raise TableError(f"{path}: missing {key}")
    if meta["kind"] not in LIMIT_KINDS:
        raise TableError(f"{path}: unknown kind {meta['kind']!r}")
    return meta, lines[i + 1 : -1]


def _split_grid(text: str) -> tuple[str, str]:
    parts = dict(p.split("=", 1) for p in text.split(";"))
    return parts["y"], parts["x"]
