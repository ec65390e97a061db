"""Kernel convolution, Levi correction, trace expansion and invariant fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import beta as beta_fn

from .errors import AccuracyError, ConditioningError, UnsupportedProbeError
from .graph_model import QuantumGraph
from .parametrix import EdgeGrid, GraphParametrix, HeatCoefficients, heat_coefficients
from .spectrum import (
    SpectralResolution,
    find_eigenvalues,
    required_lambda_max,
    spectral_heat_trace,
)

CONV_TOL = 1e-6
MAX_NODES = 2048


# --------------------------------------------------------------------------
# kernels and convolution


@dataclass(frozen=True, eq=False)
class SampledKernel:
    """A kernel ``P(t, x, y)`` restricted to row and column point sets.

    ``sampler(t)`` returns the ``(len(rows), len(cols))`` matrix at any
    ``t > 0``.  ``weights`` are quadrature weights for the columns, used when
    this kernel is the left factor of a convolution.  ``order`` is the
    claimed exponent ``kappa`` in ``P = O(t^kappa)``.
    """

    rows: np.ndarray
    cols: np.ndarray
    sampler: Callable[[float], np.ndarray]
    weights: np.ndarray | None = None
    order: float = 0.0
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    values: np.ndarray = field(default_factory=lambda: np.empty((0, 0, 0)))

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.sampler(t), dtype=float)

    @classmethod
    def from_function(cls, func, rows, cols, weights=None, order=0.0, times=()):
        """``func(t, X, Y)`` with broadcasting row/column arrays."""
        rows, cols = np.asarray(rows, float), np.asarray(cols, float)
        sampler = lambda t: np.broadcast_to(func(t, rows[:, None], cols[None, :]),
                                            (rows.size, cols.size))
        times = np.asarray(times, dtype=float)
        if times.size and (np.any(times <= 0) or np.any(np.diff(times) <= 0)):
            raise ValueError("time grid must be positive and strictly increasing")
        values = np.stack([sampler(t) for t in times]) if times.size else np.empty((0, 0, 0))
        if not np.all(np.isfinite(values)):
            raise ValueError("kernel samples must be finite")
        w = None if weights is None else np.asarray(weights, dtype=float)
        return cls(rows, cols, sampler, w, float(order), times, values)

    def scaled(self, a: float) -> "SampledKernel":
        return SampledKernel(self.rows, self.cols, lambda t: a * self(t), self.weights,
                             self.order, self.times, a * self.values)

    def __add__(self, other: "SampledKernel") -> "SampledKernel":
        return SampledKernel(self.rows, self.cols, lambda t: self(t) + other(t),
                             self.weights, min(self.order, other.order))


def _convolve_fixed(P: SampledKernel, Q: SampledKernel, t: float, n: int) -> np.ndarray:
    # s = t sin^2 u, ds = t sin 2u du on [0, pi/2]
    u, w = np.polynomial.legendre.leggauss(n)
    u = (u + 1) * np.pi / 4
    w = w * np.pi / 4
    s = t * np.sin(u) ** 2
    jac = t * np.sin(2 * u)
    mid = P.weights if P.weights is not None else np.ones(P.cols.size)
    out = 0.0
    for si, ji, wi in zip(s, jac, w):
        out = out + (wi * ji) * ((P(si) * mid) @ Q(t - si))
    return out


def convolve(P: SampledKernel, Q: SampledKernel, t: float, *, tol: float = CONV_TOL,
             n_nodes: int | None = None) -> np.ndarray:
    """``int_0^t int_G P(s,x,z) Q(t-s,z,y) dz ds`` on ``P.rows x Q.cols``.

    With ``n_nodes`` the time rule is fixed; otherwise the node count doubles
    until the result changes by less than ``tol`` relative to its size.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if P.cols.size != Q.rows.size:
        raise ValueError("inner grids of the two kernels differ")
    if n_nodes:
        return _convolve_fixed(P, Q, t, n_nodes)
    n = 16
    prev = _convolve_fixed(P, Q, t, n)
    while n < MAX_NODES:
        n *= 2
        cur = _convolve_fixed(P, Q, t, n)
        change = np.max(np.abs(cur - prev))
        if change <= tol * max(np.max(np.abs(cur)), 1e-300):
            return cur
        prev = cur
    raise AccuracyError(f"convolution did not settle with {n} time nodes",
                        estimate=float(change))


def convolve_kernel(P: SampledKernel, Q: SampledKernel, **kw) -> SampledKernel:
    """Lazy ``P * Q`` carrying order ``kappa_P + kappa_Q + 1``."""
    return SampledKernel(P.rows, Q.cols, lambda t: convolve(P, Q, t, **kw), Q.weights,
                         P.order + Q.order + 1)


def power_kernel_convolution(a: float, b: float, length: float, t: float) -> float:
    """Closed form for spatially constant ``s^a`` and ``s^b`` kernels."""
    return length * t ** (a + b + 1) * beta_fn(a + 1, b + 1)


# --------------------------------------------------------------------------
# Levi correction


def graded_grid(lo: float, hi: float, centers: Sequence[float], finest: float,
                nodes: int = 8):
    """Gauss-Legendre panels refined geometrically toward ``centers``."""
    br = {lo, hi}
    for c in centers:
        w = max(c - lo, hi - c)
        while w > finest:
            for p in (c - w, c + w):
                if lo < p < hi:
                    br.add(p)
            w /= 2
        if lo < c < hi:
            br.add(c)
    br = np.array(sorted(br))
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    h = np.diff(br)
    x = (br[:-1, None] + (xg + 1)[None, :] * h[:, None] / 2).ravel()
    w = (wg[None, :] * h[:, None] / 2).ravel()
    return x, w


@dataclass(frozen=True)
class LeviResult:
    value: float
    uncorrected: float
    terms: tuple[float, ...]
    envelope: tuple[float, ...]
    residual_constant: float

    @property
    def partial_sums(self) -> np.ndarray:
        return self.uncorrected + np.cumsum(self.terms)

    @property
    def within_envelope(self) -> bool:
        return all(abs(a) <= b for a, b in zip(self.terms, self.envelope))


def levi_correction(q: QuantumGraph, k: int, l_max: int, t: float, x, y, *,
                    parametrix: GraphParametrix | None = None, n_time: int | None = None,
                    inner_time: int = 12, nodes: int = 8) -> LeviResult:
    """Truncated Levi series ``h + sum_l (-1)^l g^{*l} * h`` at one point pair.

    ``g`` is the heat-operator residual of the parametrix ``h``.  Integration
    stays on the edge holding ``x`` and ``y``, so both points must sit at least
    ``l0/3`` from its ends.  Terms with ``l >= 2`` use fixed coarse rules.
    """
    if not 1 <= l_max <= 3:
        raise ValueError("l_max must be 1, 2 or 3")
    G = parametrix or GraphParametrix(q, k)
    edge = x[0]
    if y[0] != edge:
        raise UnsupportedProbeError("Levi correction needs both points on one edge")
    L = q.graph.edge(edge).length
    reach = G.cutoffs.l0 / 3
    for p in (x[1], y[1]):
        if p < reach or p > L - reach:
            raise UnsupportedProbeError(f"point {p} closer than l0/3 to a vertex")
    lo = max(0.0, min(x[1], y[1]) - reach)
    hi = min(L, max(x[1], y[1]) + reach)
    zs, wz = graded_grid(lo, hi, [x[1], y[1]], 1e-3 * math.sqrt(t), nodes)
    X, Y = np.array([x[1]]), np.array([y[1]])
    g_xz = EdgeGrid(G, edge, X, zs)
    h_zy = EdgeGrid(G, edge, zs, Y)
    R = SampledKernel(X, zs, g_xz.residual, wz, k - 0.5)
    H = SampledKernel(zs, Y, h_zy.value, None, -0.5)
    uncorrected = float(EdgeGrid(G, edge, X, Y).value(t)[0, 0])
    terms = [-float(convolve(R, H, t, n_nodes=n_time)[0, 0])]
    if l_max >= 2:
        g_zz = EdgeGrid(G, edge, zs, zs)
        Rzz = SampledKernel(zs, zs, g_zz.residual, wz, k - 0.5)
        power = R
        for l in range(2, l_max + 1):
            power = convolve_kernel(power, Rzz, n_nodes=inner_time)
            terms.append((-1) ** l * float(convolve(power, H, t, n_nodes=inner_time)[0, 0]))
    # empirical constants: |g(s)| <= C s^(k-1/2), int |h(s, z, y)| dz <= M
    ss = t * np.linspace(0.05, 1.0, 12)
    src = Rzz if l_max >= 2 else R
    Cres = max(float(np.max(np.abs(src(s)))) / s ** (k - 0.5) for s in ss)
    Cbar = Cres * t ** (k - 0.5)
    mass = max(float(np.max(np.abs(H(s)).T @ wz)) for s in ss)
    env = []
    for l in range(1, l_max + 1):
        denom = math.prod(k - 0.5 + j for j in range(1, l))
        env.append(Cres * (Cbar * q.total_length) ** (l - 1)
                   * t ** (k - 0.5 + l - 1) * t * mass / denom)
    return LeviResult(uncorrected + sum(terms), uncorrected, tuple(terms), tuple(env), Cres)


# --------------------------------------------------------------------------
# trace expansion


@dataclass(frozen=True)
class TraceExpansion:
    """``(4 pi t)^(-1/2) sum bulk_n t^n + (1/4) sum vertex_n t^n``."""

    bulk: np.ndarray
    vertex: np.ndarray

    @classmethod
    def from_coefficients(cls, c: HeatCoefficients, n_max: int = 3) -> "TraceExpansion":
        return cls(np.asarray(c.bulk[: n_max + 1], float),
                   np.asarray(c.vertex_sum[: n_max + 1], float))

    @property
    def n_max(self) -> int:
        return self.bulk.size - 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        n = np.arange(self.bulk.size)
        tn = t[..., None] ** n
        return (tn @ self.bulk) / np.sqrt(4 * np.pi * t) + (tn @ self.vertex) / 4


def asymptotic_trace(q: QuantumGraph, n_max: int, t, coefficients: HeatCoefficients | None = None):
    c = coefficients or heat_coefficients(q, n_max)
    return TraceExpansion.from_coefficients(c, n_max)(t)


def log_grid(a: float, b: float, n: int) -> np.ndarray:
    if not 0 < a < b or n < 2:
        raise ValueError("need 0 < a < b and at least two points")
    return np.logspace(math.log10(a), math.log10(b), n)


def per_decade(a: float, b: float, per: int = 12) -> np.ndarray:
    return log_grid(a, b, max(2, int(round(per * math.log10(b / a))) + 1))


def fit_slope(t, r, floor=None):
    """Least-squares slope of ``log|r|`` against ``log t``."""
    t, r = np.asarray(t, float), np.abs(np.asarray(r, float))
    keep = r > 0
    if floor is not None:
        keep &= r >= 100 * np.asarray(floor, float)
    if keep.sum() < 2:
        return math.nan, keep
    return float(np.polyfit(np.log(t[keep]), np.log(r[keep]), 1)[0]), keep


@dataclass(frozen=True)
class TraceComparison:
    t: np.ndarray
    spectral: np.ndarray
    asymptotic: np.ndarray
    tail: np.ndarray
    slope: float
    used: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.spectral - self.asymptotic

    def csv(self) -> str:
        lines = ["t,spectral_trace,asymptotic_trace,residual,tail_bound"]
        for row in zip(self.t, self.spectral, self.asymptotic, self.residual, self.tail):
            lines.append(",".join(format(float(v), ".17g") for v in row))
        return "\n".join(lines) + "\n"


def compare_trace(q: QuantumGraph, t_grid, *, n_max: int = 3,
                  resolution: SpectralResolution | None = None, tol: float = 1e-12,
                  coefficients: HeatCoefficients | None = None) -> TraceComparison:
    """Spectral trace against the expansion; slope of the residual in log-log."""
    t = np.sort(np.asarray(t_grid, dtype=float))
    if resolution is None:
        resolution = find_eigenvalues(q, required_lambda_max(q, float(t[0]), tol))
    vals = [spectral_heat_trace(q, resolution, float(s), tol=max(tol, 1e-300)) for s in t]
    spec = np.array([v.value for v in vals])
    tail = np.array([v.tail_bound for v in vals])
    asym = asymptotic_trace(q, n_max, t, coefficients)
    slope, used = fit_slope(t, spec - asym, tail)
    return TraceComparison(t, spec, asym, tail, slope, used)


# --------------------------------------------------------------------------
# invariant fit

FIT_EXPONENTS = (-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
MAX_CONDITION = 1e13


@dataclass(frozen=True)
class FitResult:
    exponents: tuple[float, ...]
    coefficients: np.ndarray
    stderr: np.ndarray
    condition: float

    def _c(self, p):
        return self.exponents.index(p)

    def _pair(self, p, factor):
        i = self._c(p)
        return factor * float(self.coefficients[i]), factor * float(self.stderr[i])

    @property
    def estimates(self) -> dict[str, tuple[float, float]]:
        r = math.sqrt(4 * math.pi)
        return {
            "length": self._pair(-0.5, r),
            "potential_integral": self._pair(0.5, r),
            "vertex_weight": self._pair(0.0, 4.0),
            "vertex_potential_weight": self._pair(1.0, 4.0),
        }

    def csv(self) -> str:
        lines = ["parameter,estimate,stderr"]
        for name, (est, err) in self.estimates.items():
            lines.append(f"{name},{format(est, '.17g')},{format(err, '.17g')}")
        for p, c, e in zip(self.exponents, self.coefficients, self.stderr):
            lines.append(f"c[{p:g}],{format(float(c), '.17g')},{format(float(e), '.17g')}")
        return "\n".join(lines) + "\n"


def fit_invariants(t, values, exponents: Sequence[float] = FIT_EXPONENTS,
                   max_condition: float = MAX_CONDITION) -> FitResult:
    """Relative-weighted least squares of trace samples on powers of ``t``.

    Repeated ``t`` values are averaged first, so sample order and duplication
    do not change the estimates.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.shape != values.shape or np.any(t <= 0):
        raise ValueError("need matching positive t samples")
    # sorting fixes the summation order; averaging offsets from the group
    # minimum leaves exact duplicates bit-identical
    order = np.lexsort((values, t))
    t, values = t[order], values[order]
    ut, inv = np.unique(t, return_inverse=True)
    base = np.full(ut.size, np.inf)
    np.minimum.at(base, inv, values)
    uv = base + np.bincount(inv, values - base[inv]) / np.bincount(inv)
    exps = tuple(float(p) for p in exponents)
    if ut.size < len(exps):
        raise ValueError(f"need at least {len(exps)} distinct t samples, got {ut.size}")
    # design and residuals in extended precision; float64 QR for the solves
    tl, vl = ut.astype(np.longdouble), uv.astype(np.longdouble)
    wl = 1 / np.abs(vl)
    Al = tl[:, None] ** np.array(exps, dtype=np.longdouble)[None, :] * wl[:, None]
    col_l = np.sqrt(np.sum(Al * Al, axis=0))
    Al = Al / col_l
    An, col, w = Al.astype(float), col_l.astype(float), wl.astype(float)
    cond = float(np.linalg.cond(An))
    if not cond < max_condition:
        raise ConditioningError(
            f"design matrix condition {cond:.3g} on t in [{ut[0]:.3g}, {ut[-1]:.3g}]; "
            "widen the t-range or add samples")
    Qm, Rm = np.linalg.qr(An)
    rhs = vl * wl
    coef_l = np.zeros(len(exps), dtype=np.longdouble)
    for _ in range(4):
        r = rhs - Al @ coef_l
        coef_l = coef_l + np.linalg.solve(Rm, Qm.T @ r.astype(float))
    coef = (coef_l / col_l).astype(float)
    dof = ut.size - len(exps)
    resid = (Al @ coef_l - rhs).astype(float)
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(An.T @ An)
    stderr = np.sqrt(np.maximum(np.diag(cov), 0.0)) / col
    return FitResult(exps, coef, stderr, cond)
