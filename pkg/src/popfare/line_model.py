"""Continuous single-line model on [0, 1].

All quantities share one discretisation per :class:`QuadratureConfig`:

* trip endpoints (origins/destinations) live on the nodes ``t_i = i/n`` with
  trapezoid-style weights (``h/2`` at the ends, ``h`` inside);
* the inspection integrand is sampled at cell midpoints ``m_k = (k + 1/2) h``,
  i.e. composite midpoint rule for ``q``.

``q`` between arbitrary points is the difference of a piecewise-linear
cumulative integral, so ``q(x, z) = q(x, y) + q(y, z)`` holds to rounding
error, and the revenue double sum collapses exactly to the midpoint rule for
``alpha * integral(phi(lambda))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from popfare.technology import MonitoringTechnology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureConfig:
    nodes: int = 512
    tol: float = 1e-6
    endpoint_eps: float = 1e-3

    def __post_init__(self):
        if int(self.nodes) != self.nodes or self.nodes < 16:
            raise ValueError("quadrature needs an integer node count >= 16")
        if not self.tol > 0:
            raise ValueError("quadrature tolerance must be positive")
        if not 0 <= self.endpoint_eps < 0.5:
            raise ValueError("endpoint_eps must lie in [0, 0.5)")


@dataclass(frozen=True, eq=False)
class LineDemandDensity:
    """Demand density d(x, y) on the unit square.

    Build with :meth:`constant`, :meth:`separable` or :meth:`grid`.
    """

    kind: str
    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    params: Tuple = ()

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = self.evaluate(x, y)
        return out if np.ndim(out) else float(out)

    @classmethod
    def constant(cls, value: float = 1.0) -> "LineDemandDensity":
        if not value > 0:
            raise ValueError("constant demand must be positive")
        return cls("constant", lambda x, y: np.full(np.shape(x), float(value)), (value,))

    @classmethod
    def separable(cls, x_coeffs: Sequence[float], y_coeffs: Sequence[float]) -> "LineDemandDensity":
        """d(x, y) = p(x) * r(y) with polynomial coefficients in increasing degree."""
        px = np.polynomial.Polynomial(x_coeffs)
        py = np.polynomial.Polynomial(y_coeffs)
        dens = cls("separable", lambda x, y: px(x) * py(y), (tuple(x_coeffs), tuple(y_coeffs)))
        _check_positive(dens)
        return dens

    @classmethod
    def grid(cls, values) -> "LineDemandDensity":
        """Bilinear interpolation over a uniform grid covering [0, 1]^2 (rows index x)."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 8:
            raise ValueError("grid demand needs at least an 8x8 grid")
        interp = RegularGridInterpolator(
            (np.linspace(0, 1, values.shape[0]), np.linspace(0, 1, values.shape[1])), values, method="linear"
        )

        def evaluate(x, y):
            pts = np.stack([np.clip(x, 0, 1), np.clip(y, 0, 1)], axis=-1)
            return interp(pts.reshape(-1, 2)).reshape(np.shape(x))

        dens = cls("grid", evaluate, (values.shape,))
        _check_positive(dens)
        return dens


def _check_positive(d: LineDemandDensity, samples: int = 33) -> None:
    g = np.linspace(0, 1, samples)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    vals = d.evaluate(xx, yy)
    off = ~np.eye(samples, dtype=bool)
    if not np.all(np.isfinite(vals)) or np.any(vals[off] <= 0):
        raise ValueError("demand density must be finite and positive off the diagonal")


@dataclass(frozen=True, eq=False)
class InspectorDensity:
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    total: float = 1.0
    label: str = "custom"

    def __post_init__(self):
        m = _midpoints(4096)
        vals = np.asarray(self.fn(m), dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("inspector density must be finite and non-negative")
        mass = float(vals.mean())
        if abs(mass - self.total) > 1e-6 * max(1.0, abs(self.total)):
            raise ValueError(f"inspector density integrates to {mass:.9g}, expected {self.total}")

    def __call__(self, a):
        out = np.asarray(self.fn(np.asarray(a, dtype=float)), dtype=float)
        return out if out.ndim else float(out)

    @classmethod
    def uniform(cls, total: float = 1.0) -> "InspectorDensity":
        return cls(lambda a: np.full(np.shape(a), float(total)), total, "uniform")

    def perturbed(self, eta: Callable[[np.ndarray], np.ndarray], eps: float) -> "InspectorDensity":
        base = self.fn
        return InspectorDensity(lambda a: base(a) + eps * eta(a), self.total, f"{self.label}+perturbation")


@dataclass(frozen=True)
class LineStrategy:
    """Trip from ``origin`` to ``dest`` with tickets for disjoint sub-segments."""

    origin: float
    dest: float
    segments: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        lo, hi = sorted((self.origin, self.dest))
        segs = tuple(sorted((min(a, b), max(a, b)) for a, b in self.segments))
        for a, b in segs:
            if a < lo - 1e-12 or b > hi + 1e-12:
                raise ValueError(f"ticket segment {(a, b)} leaves the trip interval {(lo, hi)}")
        for (a0, b0), (a1, b1) in zip(segs, segs[1:]):
            if a1 < b0:
                raise ValueError(f"overlapping ticket segments {(a0, b0)} and {(a1, b1)}")
        object.__setattr__(self, "segments", segs)

    def uncovered(self) -> list[Tuple[float, float]]:
        lo, hi = sorted((self.origin, self.dest))
        gaps, cur = [], lo
        for a, b in self.segments:
            if a > cur:
                gaps.append((cur, a))
            cur = max(cur, b)
        if cur < hi:
            gaps.append((cur, hi))
        return gaps


def _midpoints(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


@lru_cache(maxsize=8)
def _demand_tables(d: LineDemandDensity, nodes: int):
    """Endpoint weights matrix and pass-through mass at every cell midpoint."""
    h = 1.0 / nodes
    t = np.linspace(0.0, 1.0, nodes + 1)
    w = np.full(nodes + 1, h)
    w[0] = w[-1] = h / 2
    xx, yy = np.meshgrid(t, t, indexing="ij")
    dm = np.asarray(d.evaluate(xx, yy), dtype=float)
    np.fill_diagonal(dm, 0.0)
    wmat = dm * w[:, None] * w[None, :]
    sym = wmat + wmat.T
    # S_k = sum_{i <= k < j} sym[i, j]
    suffix = np.cumsum(sym[:, ::-1], axis=1)[:, ::-1]
    acc = np.cumsum(suffix, axis=0)
    k = np.arange(nodes)
    dpass = acc[k, k + 1]
    return t, wmat, dpass


@lru_cache(maxsize=32)
def _cumulative(lam: InspectorDensity, phi: MonitoringTechnology, d: LineDemandDensity, nodes: int):
    t, _, dpass = _demand_tables(d, nodes)
    h = 1.0 / nodes
    num = np.asarray(phi(lam(_midpoints(nodes))), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = num / dpass
    g[dpass <= 0] = np.inf
    G = np.concatenate([[0.0], np.cumsum(g * h)])
    return g, G


def pass_density(d: LineDemandDensity, a: float, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Mass of trips crossing point ``a`` by direct nested midpoint quadrature."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"position {a} outside [0, 1]")
    if a == 0.0 or a == 1.0:
        return 0.0
    nx = max(1, math.ceil(quad.nodes * a))
    ny = max(1, math.ceil(quad.nodes * (1.0 - a)))
    xs = a * _midpoints(nx)
    ys = a + (1.0 - a) * _midpoints(ny)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    cell = (a / nx) * ((1.0 - a) / ny)
    return float((d.evaluate(xx, yy) + d.evaluate(yy, xx)).sum() * cell)


def _clip(pos: float, quad: QuadratureConfig) -> float:
    if not 0.0 <= pos <= 1.0:
        raise ValueError(f"position {pos} outside [0, 1]")
    return min(max(pos, quad.endpoint_eps), 1.0 - quad.endpoint_eps)


def _cum_at(pos: float, g: np.ndarray, G: np.ndarray, nodes: int) -> float:
    i = min(int(pos * nodes), nodes - 1)
    return float(G[i] + (pos - i / nodes) * g[i])


def inspection_probability(
    x: float,
    y: float,
    lam: InspectorDensity,
    phi: MonitoringTechnology,
    d: LineDemandDensity,
    quad: QuadratureConfig = QuadratureConfig(),
) -> float:
    """Expected inspections on a trip between ``x`` and ``y``.

    Trip endpoints are clipped into ``[eps, 1 - eps]``. The value is an
    expected count and is not capped at one.
    """
    x, y = _clip(x, quad), _clip(y, quad)
    if x == y:
        return 0.0
    lo, hi = min(x, y), max(x, y)
    g, G = _cumulative(lam, phi, d, quad.nodes)
    n = quad.nodes
    cells = slice(min(int(lo * n), n - 1), min(int(hi * n), n - 1) + 1)
    if not np.all(np.isfinite(g[cells])):
        raise ZeroDivisionError(f"zero pass-through demand between {lo} and {hi}")
    q = _cum_at(hi, g, G, n) - _cum_at(lo, g, G, n)
    if q > 1:
        log.info("expected inspection count %.4f exceeds one on (%g, %g)", q, lo, hi)
    return q


def ic_price_line(x, y, alpha, lam, phi, d, quad: QuadratureConfig = QuadratureConfig()) -> float:
    return alpha * inspection_probability(x, y, lam, phi, d, quad)


def strategy_cost_line(
    s: LineStrategy,
    alpha: float,
    lam: InspectorDensity,
    phi: MonitoringTechnology,
    d: LineDemandDensity,
    prices: Optional[Callable[[float, float], float]] = None,
    quad: QuadratureConfig = QuadratureConfig(),
) -> float:
    """Expected fines on uncovered stretches plus ticket outlay (IC prices by default)."""
    if prices is None:
        def prices(a, b):
            return ic_price_line(a, b, alpha, lam, phi, d, quad)
    exposure = alpha * sum(inspection_probability(a, b, lam, phi, d, quad) for a, b in s.uncovered())
    outlay = sum(prices(a, b) for a, b in s.segments)
    return exposure + outlay


def line_revenue(lam, phi, d, alpha: float, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Revenue when every trip pays its IC price: sum over both trip orientations."""
    t, wmat, _ = _demand_tables(d, quad.nodes)
    g, G = _cumulative(lam, phi, d, quad.nodes)
    if not np.all(np.isfinite(g)):
        raise ZeroDivisionError("demand density lacks full support")
    return float(alpha * np.sum(wmat * np.abs(G[None, :] - G[:, None])))


def line_revenue_reordered(lam, phi, alpha: float, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """``alpha * integral of phi(lambda(a))`` with the same midpoint nodes."""
    return float(alpha * np.mean(phi(lam(_midpoints(quad.nodes)))))


def bump(center: float, width: float) -> Callable[[np.ndarray], np.ndarray]:
    """Raised-cosine bump with unit integral and support ``center +- width``."""

    def fn(a):
        a = np.asarray(a, dtype=float)
        z = (a - center) / width
        return np.where(np.abs(z) < 1, np.cos(np.pi * z / 2) ** 2 / width, 0.0)

    return fn


@dataclass
class OptimalityReport:
    stationarity_residual: float
    base_revenue: float
    revenue_deltas: list = field(default_factory=list)
    tolerance: float = 1e-6

    @property
    def all_nonpositive(self) -> bool:
        return all(dv <= self.tolerance for dv in self.revenue_deltas)

    @property
    def max_abs_relative_delta(self) -> float:
        if not self.revenue_deltas:
            return 0.0
        return max(abs(dv) for dv in self.revenue_deltas) / abs(self.base_revenue)


def check_inspector_optimality(
    lam: InspectorDensity,
    phi: MonitoringTechnology,
    d: LineDemandDensity,
    alpha: float,
    quad: QuadratureConfig = QuadratureConfig(),
    perturbations: int = 20,
    seed: int = 0,
    width: float = 0.08,
) -> OptimalityReport:
    """Stationarity residual of phi'(lambda) plus revenue changes under
    random mass-preserving bump-pair reallocations."""
    m = _midpoints(quad.nodes)
    lam_vals = np.asarray(lam(m), dtype=float)
    slopes = np.asarray(phi.derivative(lam_vals), dtype=float)
    residual = float(slopes.max() - slopes.min())
    base = line_revenue(lam, phi, d, alpha, quad)
    report = OptimalityReport(residual, base, tolerance=quad.tol)
    rng = np.random.default_rng(seed)
    floor = float(lam_vals.min())
    for _ in range(perturbations):
        c1, c2 = rng.uniform(width, 1 - width, size=2)
        b1, b2 = bump(c1, width), bump(c2, width)
        eta = lambda a, b1=b1, b2=b2: b1(a) - b2(a)
        # keep lambda + eps*eta >= 0: bump peak is 1/width
        eps = rng.uniform(0.1, 0.9) * floor * width
        moved = lam.perturbed(eta, eps)
        report.revenue_deltas.append(line_revenue(moved, phi, d, alpha, quad) - base)
    return report
