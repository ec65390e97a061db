"""Small-time parametrix for the heat kernel and the heat coefficients.

Along a line with potential ``V`` the ansatz is
``h_k = f(t,x,y) * sum_{l<=k} u_l(x,y) t^l`` with ``f`` the Gauss kernel and

    u_l(x,y) = int_0^1 tau^(l-1) (u_{l-1}'' + V u_{l-1})(x + (y-x) tau) dtau,

derivatives taken in the second argument.  This solves the transport
equation ``l u_l + (y-x) u_l' = u_{l-1}'' + V u_{l-1}`` and gives the value
on the diagonal as the limit without a special case.  Each level is held as a
Chebyshev series in ``y``, so the second derivative needed by the next level
is exact up to the series truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from threading import Lock
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import Chebyshev
from scipy.special import expit, roots_genlaguerre

from .errors import (
    AccuracyError,
    UnsupportedConditionsError,
    UnsupportedOrderError,
    UnsupportedProbeError,
)
from .graph_model import EdgePotential, Point, QuantumGraph, graph_metric

MAX_ORDER = 8
LOCAL_PAD = 0.25
CHOP = 1e-14
MAX_DEGREE = 160


# --------------------------------------------------------------------------
# potential lines


@dataclass(frozen=True)
class PotentialLine:
    """A smooth potential ``V(z, order)`` on ``[lo, hi]``."""

    func: Callable
    lo: float
    hi: float
    frequency: float = 0.0

    def __call__(self, z, order: int = 0):
        return self.func(np.asarray(z, dtype=float), order)

    @classmethod
    def from_edge(cls, pot: EdgePotential) -> "PotentialLine":
        return cls(pot.__call__, 0.0, pot.length, pot.max_frequency)

    @classmethod
    def from_callable(cls, func, lo, hi, frequency=0.0) -> "PotentialLine":
        """Wrap ``func(z)``; derivatives are not needed by the recursion."""
        return cls(lambda z, order=0: np.asarray(func(z), dtype=float) * np.ones_like(z),
                   float(lo), float(hi), float(frequency))

    @classmethod
    def joined(cls, right: EdgePotential, left: EdgePotential) -> "PotentialLine":
        """``right(z)`` for ``z >= 0`` and ``left(-z)`` for ``z < 0``."""

        def func(z, order=0):
            z = np.asarray(z, dtype=float)
            neg = (-1.0) ** order * left(-z, order)
            return np.where(z >= 0, right(z, order), neg)

        return cls(func, -left.length, right.length,
                   max(right.max_frequency, left.max_frequency))


def _degree_guess(frequency: float, width: float) -> int:
    return int(min(MAX_DEGREE, 24 + 2 * math.ceil(frequency * width)))


def _chop(u: Chebyshev, tol: float = CHOP):
    """Cut the series where three consecutive coefficients drop below ``tol``.

    Returns the chopped series and whether such a plateau was found.
    """
    c = np.abs(u.coef)
    thr = tol * max(np.max(c), 1e-300)
    small = c < thr
    run = small[:-2] & small[1:-1] & small[2:]
    hits = np.flatnonzero(run)
    if hits.size == 0:
        return u, False
    n = max(int(hits[0]), 1)
    return Chebyshev(u.coef[:n], domain=u.domain), True


def _levels(line: PotentialLine, x: float, lo: float, hi: float, k: int, deg: int):
    """``u_0 .. u_k`` as Chebyshev series in ``y`` on ``[lo, hi]`` for fixed ``x``.

    Returns the levels and whether every series was resolved at ``deg``.
    """
    tau, w = np.polynomial.legendre.leggauss(deg // 2 + 12)
    tau, w = (tau + 1) / 2, w / 2
    u = Chebyshev([1.0], domain=[lo, hi])
    out, ok = [u], True
    for l in range(1, k + 1):
        prev = u
        vu, good = _chop(Chebyshev.interpolate(lambda z: line(z) * prev(z), deg,
                                               domain=[lo, hi]))
        ok &= good
        g = prev.deriv(2) + vu if prev.coef.size > 2 else vu
        wl = w * tau ** (l - 1)

        def level(y, g=g, wl=wl):
            pts = x + np.multiply.outer(y - x, tau)
            return g(pts) @ wl

        u, good = _chop(Chebyshev.interpolate(level, deg, domain=[lo, hi]))
        ok &= good
        out.append(u)
    return out, ok


def _adaptive_levels(line, x, lo, hi, k):
    deg = _degree_guess(line.frequency, hi - lo)
    while True:
        levels, ok = _levels(line, x, lo, hi, k, deg)
        if ok:
            return levels
        if deg >= MAX_DEGREE:
            raise AccuracyError(f"u-recursion unresolved at degree {deg}",
                                estimate=float(abs(levels[-1].coef[-1])))
        deg = min(MAX_DEGREE, 2 * deg)


def u_levels(line: PotentialLine, x: float, y: float, k: int) -> np.ndarray:
    """``[u_0(x,y), ..., u_k(x,y)]`` using only ``V`` near ``[x, y]``."""
    if k > MAX_ORDER:
        raise UnsupportedOrderError(f"order {k} exceeds supported maximum {MAX_ORDER}")
    lo, hi = min(x, y) - LOCAL_PAD, max(x, y) + LOCAL_PAD
    levels = _adaptive_levels(line, float(x), lo, hi, k)
    return np.array([u(y) for u in levels])


def u_recursive(line: PotentialLine, x: float, y: float, l: int) -> float:
    if l < 0:
        raise ValueError("l must be non-negative")
    return float(u_levels(line, x, y, l)[l])


def u_diagonal_closed(U: Callable, x, l: int):
    """Closed diagonal values from potential derivatives ``U(x, order)``."""
    if l == 0:
        return np.ones_like(np.asarray(x, dtype=float))
    u0, u2 = U(x, 0), U(x, 2)
    if l == 1:
        return u0
    if l == 2:
        return u2 / 6 + u0**2 / 2
    if l == 3:
        u1, u4 = U(x, 1), U(x, 4)
        return u4 / 60 + u2 * u0 / 6 + u1**2 / 12 + u0**3 / 6
    raise UnsupportedOrderError(f"no closed diagonal form for l={l}")


def vertex_derivatives(q: QuantumGraph, vertex: str) -> tuple[float, float, float]:
    """``U(v), U''(v), U''''(v)`` after the smoothness check."""
    q.require_smooth(4)
    return tuple(q.vertex_value(vertex, n) for n in (0, 2, 4))


def u_vertex_taylor(q: QuantumGraph, vertex: str, l: int) -> np.ndarray:
    """Coefficients of ``u_l(x, -x)`` in powers ``x^0, x^1, ...`` at a vertex."""
    U, U2, U4 = vertex_derivatives(q, vertex)
    if l == 0:
        return np.array([1.0])
    if l == 1:
        return np.array([U, 0.0, U2 / 6, 0.0, U4 / 120])
    if l == 2:
        return np.array([U2 / 6 + U**2 / 2, 0.0, U4 / 60 + U * U2 / 6])
    if l == 3:
        return np.array([U4 / 60 + U * U2 / 6 + U**3 / 6])
    raise UnsupportedOrderError(f"vertex expansion available for l <= 3, got {l}")


# --------------------------------------------------------------------------
# tabulated u-functions


class UFunctionTable:
    """Two-dimensional Chebyshev fits of ``u_0..u_k`` on ``line x line``."""

    def __init__(self, line: PotentialLine, k: int, degree: int | None = None):
        if k > MAX_ORDER:
            raise UnsupportedOrderError(f"order {k} exceeds supported maximum {MAX_ORDER}")
        self.line, self.k = line, k
        self._degree = degree
        self._lock = Lock()
        self._coef = None

    @property
    def coefficients(self) -> np.ndarray:
        if self._coef is None:
            with self._lock:
                if self._coef is None:
                    self._coef = self._build()
        return self._coef

    def _build(self) -> np.ndarray:
        lo, hi = self.line.lo, self.line.hi
        deg = self._degree or _degree_guess(self.line.frequency, hi - lo)
        while True:
            nodes = C.chebpts1(deg + 1)
            pts = lo + (nodes + 1) * (hi - lo) / 2
            vals = np.empty((self.k + 1, deg + 1, deg + 1))
            for i, x in enumerate(pts):
                levels, _ = _levels(self.line, x, lo, hi, self.k, deg)
                for l, u in enumerate(levels):
                    vals[l, i] = u(pts)
            V = C.chebvander(nodes, deg)
            Vinv = np.linalg.inv(V)
            coef = Vinv @ vals @ Vinv.T
            scale = np.max(np.abs(coef), axis=(1, 2), keepdims=True)
            tail = np.maximum(np.abs(coef[:, -3:, :]).max(axis=(1, 2)),
                              np.abs(coef[:, :, -3:]).max(axis=(1, 2)))
            # higher levels carry rounding noise near 1e-12 from repeated
            # differentiation, so demanding more only inflates the degree
            if np.all(tail <= 1e-10 * scale[:, 0, 0]) or deg >= MAX_DEGREE:
                if np.any(tail > 1e-9 * scale[:, 0, 0]):
                    raise AccuracyError(f"u-table unresolved at degree {deg}",
                                        estimate=float(np.max(tail)))
                return coef
            deg = min(MAX_DEGREE, 2 * deg)

    def _map(self, z):
        lo, hi = self.line.lo, self.line.hi
        return (2 * np.asarray(z, dtype=float) - (lo + hi)) / (hi - lo)

    def __call__(self, l: int, x, y, dy: int = 0):
        """``d^dy/dy^dy u_l(x, y)``."""
        c = self.coefficients[l]
        if dy:
            c = C.chebder(c, dy, scl=2 / (self.line.hi - self.line.lo), axis=1)
        return C.chebval2d(self._map(x), self._map(y), c)

    def series(self, t, x, y, dy: int = 0):
        """``sum_l d^dy u_l t^l`` and its t-derivative."""
        s = ds = 0.0
        for l in range(self.k + 1):
            u = self(l, x, y, dy)
            s = s + u * t**l
            if l:
                ds = ds + l * u * t ** (l - 1)
        return s, ds


def gauss(t, x, y):
    return np.exp(-((x - y) ** 2) / (4 * t)) / np.sqrt(4 * np.pi * t)


def eval_real_line_parametrix(line, k: int, t: float, x: float, y: float) -> float:
    """Truncated ansatz on a line; ``line`` may be a PotentialLine or a table."""
    if t <= 0:
        raise ValueError("t must be positive")
    if isinstance(line, UFunctionTable):
        s, _ = line.series(t, x, y)
    else:
        s = np.polyval(u_levels(line, x, y, k)[::-1], t)
    return float(gauss(t, x, y) * s)


def line_residual(table: UFunctionTable, t, x, z):
    """``(d_t - d_z^2 - V(z))`` applied to the ansatz on a line."""
    s, st = table.series(t, x, z)
    sz, _ = table.series(t, x, z, dy=1)
    szz, _ = table.series(t, x, z, dy=2)
    V = table.line(z)
    return gauss(t, x, z) * (st - (x - z) / t * sz - szz - V * s)


# --------------------------------------------------------------------------
# cut-offs


def _smooth_step(s):
    """``S(s)`` rising from 0 to 1 on ``[0, 1]`` with ``S(1-s) = 1 - S(s)``; values and two derivatives."""
    s = np.asarray(s, dtype=float)
    inner = (s > 0.005) & (s < 0.995)
    sc = np.where(inner, s, 0.5)
    phi = 1 / sc - 1 / (1 - sc)
    p1 = -1 / sc**2 - 1 / (1 - sc) ** 2
    p2 = 2 / sc**3 - 2 / (1 - sc) ** 3
    S = expit(-phi)
    S1 = -S * (1 - S) * p1
    S2 = -(S1 * (1 - 2 * S) * p1 + S * (1 - S) * p2)
    mid = (s > 0) & (s < 1)
    sm = np.where(mid, s, 0.5)
    val = np.where(mid, expit(-(1 / sm - 1 / (1 - sm))), np.where(s >= 1, 1.0, 0.0))
    return val, np.where(inner, S1, 0.0), np.where(inner, S2, 0.0)


def eta(x, derivative: int = 0):
    """Cut-off: 1 on ``(-inf, 1/3]``, 0 on ``[2/3, inf)``, ``eta(1-x) = 1 - eta(x)``."""
    S, S1, S2 = _smooth_step(3 * np.asarray(x, dtype=float) - 1)
    return (1 - S, -3 * S1, -9 * S2)[derivative]


@dataclass(frozen=True)
class CutoffSystem:
    """Cut-off ``eta`` with scale ``l0`` and the vertex partition of unity."""

    q: QuantumGraph
    l0: float

    @classmethod
    def for_graph(cls, q: QuantumGraph, l0: float | None = None) -> "CutoffSystem":
        l0 = q.graph.shortest_edge if l0 is None else l0
        if not 0 < l0 <= q.graph.shortest_edge:
            raise ValueError("l0 must lie in (0, shortest edge]")
        return cls(q, float(l0))

    def eta(self, x, derivative: int = 0):
        return eta(x, derivative)

    def chi(self, vertex: str, p: Point) -> float:
        """``eta(s / L)`` with ``s`` the distance from ``vertex`` along the edge."""
        e = self.q.graph.edge(p.edge)
        out = 0.0
        if e.tail == vertex:
            out += float(eta(p.x / e.length))
        if e.head == vertex:
            out += float(eta(1 - p.x / e.length))
        return out

    def partition_sum(self, p: Point) -> float:
        e = self.q.graph.edge(p.edge)
        return sum(self.chi(v, p) for v in {e.tail, e.head})


# --------------------------------------------------------------------------
# star and graph parametrices


class StarParametrix:
    """Direct plus reflected terms around one vertex.

    Edges at the vertex are indexed like ``q.graph.ends(vertex)``; local
    coordinates measure the distance from the vertex.
    """

    def __init__(self, q: QuantumGraph, vertex: str, k: int):
        cond = q.conditions[vertex]
        if cond.sigma is None:
            raise UnsupportedConditionsError(f"vertex {vertex!r}: no k-independent sigma")
        self.q, self.vertex, self.k = q, vertex, k
        self.ends = q.graph.ends(vertex)
        self.sigma = np.real_if_close(cond.sigma)
        self.potentials = []
        for end in self.ends:
            pot = q.potentials[end.edge]
            self.potentials.append(pot if end.side == 0 else pot.flipped())
        self._tables: dict[tuple[int, int], UFunctionTable] = {}
        self._lock = Lock()

    def table(self, a: int, b: int) -> UFunctionTable:
        key = (a, b)
        if key not in self._tables:
            with self._lock:
                if key not in self._tables:
                    line = PotentialLine.joined(self.potentials[a], self.potentials[b])
                    self._tables[key] = UFunctionTable(line, self.k)
        return self._tables[key]

    def _terms(self, t, a, x, b, y):
        out = []
        if a == b:
            out.append((1.0, self.table(a, a), y, 1))
        if self.sigma[a, b] != 0:
            out.append((self.sigma[a, b], self.table(a, b), -y, -1))
        return out

    def value(self, t, a: int, x, b: int, y):
        total = 0.0
        for c, tab, z, _ in self._terms(t, a, x, b, y):
            s, _ = tab.series(t, x, z)
            total = total + c * gauss(t, x, z) * s
        return total

    def dy(self, t, a, x, b, y):
        """Derivative in the local coordinate ``y``."""
        total = 0.0
        for c, tab, z, sign in self._terms(t, a, x, b, y):
            s, _ = tab.series(t, x, z)
            sz, _ = tab.series(t, x, z, dy=1)
            fz = gauss(t, x, z) * (x - z) / (2 * t)
            total = total + c * sign * (fz * s + gauss(t, x, z) * sz)
        return total

    def residual(self, t, a, x, b, y):
        total = 0.0
        for c, tab, z, _ in self._terms(t, a, x, b, y):
            total = total + c * line_residual(tab, t, x, z)
        return total


def eval_star_parametrix(star: StarParametrix, t: float, a: int, x: float, b: int,
                         y: float) -> float:
    if t <= 0:
        raise ValueError("t must be positive")
    return float(star.value(t, a, x, b, y))


class GraphParametrix:
    """``eta(2 d(x,y) / l0) sum_v chi_v(x) h^v(t,x,y)`` on a graph without loops or multi-edges."""

    def __init__(self, q: QuantumGraph, k: int, l0: float | None = None):
        if q.graph.has_loops_or_multi_edges():
            raise ValueError("subdivide loops and multi-edges first")
        if k > MAX_ORDER:
            raise UnsupportedOrderError(f"order {k} exceeds supported maximum {MAX_ORDER}")
        self.q, self.k = q, k
        self.cutoffs = CutoffSystem.for_graph(q, l0)
        self._stars: dict[str, StarParametrix] = {}

    def star(self, v: str) -> StarParametrix:
        if v not in self._stars:
            self._stars[v] = StarParametrix(self.q, v, self.k)
        return self._stars[v]

    def local(self, v: str, p: Point):
        """End index at ``v``, local coordinate and its orientation sign."""
        for j, end in enumerate(self.q.graph.ends(v)):
            if end.edge == p.edge:
                L = self.q.graph.edge(p.edge).length
                return (j, p.x, 1.0) if end.side == 0 else (j, L - p.x, -1.0)
        return None

    def _pieces(self, x: Point, y: Point):
        e = self.q.graph.edge(x.edge)
        for v in dict.fromkeys((e.tail, e.head)):
            chi = self.cutoffs.chi(v, x)
            if chi == 0.0:
                continue
            lx, ly = self.local(v, x), self.local(v, y)
            if ly is None:
                continue
            yield v, chi, lx, ly

    def value(self, t: float, x, y) -> float:
        x, y = Point(*x), Point(*y)
        d = graph_metric(self.q, x, y)
        cut = float(eta(2 * d / self.cutoffs.l0))
        if cut == 0.0:
            return 0.0
        total = 0.0
        for v, chi, (a, xs, _), (b, ys, _) in self._pieces(x, y):
            total += chi * float(self.star(v).value(t, a, xs, b, ys))
        return cut * total

    def residual(self, t: float, x, y) -> float:
        """``(d_t + D_y)`` of the graph parametrix, computed analytically."""
        x, y = Point(*x), Point(*y)
        L = self.q.graph.edge(y.edge).length
        if not 0.0 < y.x < L:
            raise UnsupportedProbeError(f"probe {y} sits on a vertex")
        d = graph_metric(self.q, x, y)
        l0 = self.cutoffs.l0
        if d >= l0 / 3:
            return 0.0
        step = 1e-7 * L
        dd = graph_metric(self.q, x, Point(y.edge, min(L, y.x + step))) - graph_metric(
            self.q, x, Point(y.edge, max(0.0, y.x - step)))
        slope = float(np.sign(dd))
        e0 = float(eta(2 * d / l0))
        e1 = float(eta(2 * d / l0, 1)) * 2 / l0 * slope
        e2 = float(eta(2 * d / l0, 2)) * (2 / l0) ** 2
        total = 0.0
        for v, chi, (a, xs, _), (b, ys, sgn) in self._pieces(x, y):
            star = self.star(v)
            r = star.residual(t, a, xs, b, ys)
            if e1 or e2:
                r = e0 * r - 2 * e1 * sgn * star.dy(t, a, xs, b, ys) - e2 * star.value(
                    t, a, xs, b, ys)
            else:
                r = e0 * r
            total += chi * float(r)
        return total


class EdgeGrid:
    """Graph parametrix and its residual on a product grid within one edge.

    Valid when every pair is joined by the straight segment inside the edge,
    which holds wherever the cut-off is non-zero.
    """

    def __init__(self, G: GraphParametrix, edge: str, xs, zs):
        e = G.q.graph.edge(edge)
        self.xs = xs = np.asarray(xs, dtype=float)
        self.zs = zs = np.asarray(zs, dtype=float)
        diff = zs[None, :] - xs[:, None]
        arg = 2 * np.abs(diff) / G.cutoffs.l0
        scale = 2 / G.cutoffs.l0
        self.cut = eta(arg)
        self.cut1 = eta(arg, 1) * scale * np.sign(diff)
        self.cut2 = eta(arg, 2) * scale**2
        self.k = G.k
        self.parts = []
        for v in dict.fromkeys((e.tail, e.head)):
            chi = np.array([G.cutoffs.chi(v, Point(edge, x)) for x in xs])
            if not np.any(chi):
                continue
            j, _, sgn = G.local(v, Point(edge, 0.0))
            xl = xs if sgn > 0 else e.length - xs
            zl = zs if sgn > 0 else e.length - zs
            star = G.star(v)
            for coef, tab, z, zsign in star._terms(None, j, None, j, zl):
                m = tab._map
                us = [np.stack([C.chebgrid2d(m(xl), m(z), C.chebder(
                    tab.coefficients[l], dy, scl=2 / (tab.line.hi - tab.line.lo), axis=1)
                    if dy else tab.coefficients[l]) for l in range(self.k + 1)])
                    for dy in (0, 1, 2)]
                self.parts.append((chi[:, None] * coef, xl[:, None], z[None, :],
                                   zsign * sgn, us, tab.line(z)[None, :]))

    def _series(self, us, t):
        p = t ** np.arange(self.k + 1)
        dp = np.arange(self.k + 1) * t ** np.maximum(np.arange(self.k + 1) - 1, 0)
        return [np.tensordot(p, u, 1) for u in us], np.tensordot(dp, us[0], 1)

    def _star_sums(self, t, want_residual: bool):
        val = np.zeros((self.xs.size, self.zs.size))
        dy = np.zeros_like(val)
        res = np.zeros_like(val)
        for w, x, z, sign, us, V in self.parts:
            (s, sz, szz), st = self._series(us, t)
            f = gauss(t, x, z)
            val += w * f * s
            if want_residual:
                dy += w * sign * (f * (x - z) / (2 * t) * s + f * sz)
                res += w * f * (st - (x - z) / t * sz - szz - V * s)
        return val, dy, res

    def value(self, t: float) -> np.ndarray:
        return self.cut * self._star_sums(t, False)[0]

    def residual(self, t: float) -> np.ndarray:
        val, dy, res = self._star_sums(t, True)
        return self.cut * res - 2 * self.cut1 * dy - self.cut2 * val


def eval_graph_parametrix(q: QuantumGraph, k: int, t: float, x, y,
                          parametrix: GraphParametrix | None = None) -> float:
    p = parametrix or GraphParametrix(q, k)
    return p.value(t, x, y)


def parametrix_residual(q: QuantumGraph, k: int, t: float, x, y,
                        parametrix: GraphParametrix | None = None) -> float:
    p = parametrix or GraphParametrix(q, k)
    return p.residual(t, x, y)


# --------------------------------------------------------------------------
# heat coefficients


def boundary_coefficients(U: float, U2: float, U4: float, n_max: int = 3) -> np.ndarray:
    """Vertex coefficients ``a_n^b`` for ``n <= n_max``."""
    a = np.array([1.0, U, U2 / 4 + U**2 / 2, U4 / 32 + U * U2 / 4 + U**3 / 6])
    if n_max > 3:
        raise UnsupportedOrderError("vertex coefficients available for n <= 3")
    return a[: n_max + 1]


@dataclass(frozen=True)
class HeatCoefficients:
    bulk: np.ndarray  # integral of a_n over the graph
    vertex: dict = field(default_factory=dict)  # vertex -> sum_alpha sigma^aa * a_n^b(v)

    @property
    def n_max(self) -> int:
        return self.bulk.size - 1

    @cached_property
    def vertex_sum(self) -> np.ndarray:
        out = np.zeros_like(self.bulk)
        for v in self.vertex.values():
            out = out + v
        return out

    def scaled(self, factor: float) -> "HeatCoefficients":
        return HeatCoefficients(self.bulk * factor,
                                {v: a * factor for v, a in self.vertex.items()})

    def csv(self) -> str:
        lines = ["n,bulk_integral,vertex_sum,total_weight"]
        for n in range(self.bulk.size):
            lines.append(",".join([str(n), format(float(self.bulk[n]), ".17g"),
                                   format(float(self.vertex_sum[n]), ".17g"),
                                   format(float(self.vertex_sum[n]) / 4, ".17g")]))
        return "\n".join(lines) + "\n"


def heat_coefficients(q: QuantumGraph, n_max: int = 3) -> HeatCoefficients:
    if not 0 <= n_max <= 3:
        raise UnsupportedOrderError("heat coefficients available for n <= 3")
    q.require_smooth(4)
    bulk = np.zeros(n_max + 1)
    xg, wg = np.polynomial.legendre.leggauss(32)
    for e in q.graph.edges:
        pot = q.potentials[e.id]
        npanel = max(2, int(np.ceil(4 * pot.max_frequency * e.length / np.pi)))
        br = np.linspace(0.0, e.length, npanel + 1)
        h = np.diff(br)
        x = (br[:-1, None] + (xg + 1)[None, :] * h[:, None] / 2).ravel()
        w = (wg[None, :] * h[:, None] / 2).ravel()
        for n in range(n_max + 1):
            bulk[n] += w @ np.broadcast_to(u_diagonal_closed(pot, x, n), x.shape)
    vertex = {}
    for v in q.graph.vertices:
        sig = np.sum(q.sigma_diagonal(v)).real
        vertex[v] = sig * boundary_coefficients(*vertex_derivatives(q, v), n_max)
    return HeatCoefficients(bulk, vertex)


def gaussian_moment(m: int) -> float:
    """``int_0^inf x^m exp(-x^2) dx`` by quadrature."""
    from scipy.integrate import quad

    return quad(lambda s: s**m * np.exp(-s * s), 0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)[0]


def boundary_series(q: QuantumGraph, vertex: str) -> np.ndarray:
    """Coefficients of ``t^0..t^3`` from the Gaussian-weighted vertex integral.

    Uses the vertex expansions of ``u_l(x,-x)`` and numerically computed
    moments; normalized for a single unit reflection coefficient.
    """
    out = np.zeros(4)
    for l in range(4):
        taylor = u_vertex_taylor(q, vertex, l)
        for p, c in enumerate(taylor):
            if c == 0 or p % 2:
                continue
            n = l + p // 2
            if n <= 3:
                out[n] += 2 / math.sqrt(math.pi) * c * gaussian_moment(p)
    return out


def boundary_integral(star: StarParametrix, a: int, t: float, n_nodes: int = 60) -> float:
    """``(2/sqrt(pi)) int_0^inf e^{-x^2} sum_l u_l(sqrt(t)x, -sqrt(t)x) t^l dx`` on one edge.

    The Gaussian tail beyond the edge end is dropped, so ``t`` should be small
    against the squared edge length.
    """
    r, w = roots_genlaguerre(n_nodes, -0.5)
    tab = star.table(a, a)
    s = np.sqrt(t * r)
    keep = s < tab.line.hi
    vals, _ = tab.series(t, s[keep], -s[keep])
    return float(np.sum(w[keep] * vals) / math.sqrt(math.pi))


def vertex_series_fit(star: StarParametrix, a: int, n_half: int = 7, radius: float = 0.5,
                      degree: int = 20) -> np.ndarray:
    """Coefficients of ``t^(j/2)``, ``j < n_half``, in the Gaussian vertex integral.

    Each ``u_l(s, -s)`` from the tabulated recursion is fitted by a power
    series in ``s`` near the vertex; the ``s^p`` term contributes
    ``t^(l + p/2)`` times a Gaussian moment.  Odd ``p`` gives the half powers.
    """
    tab = star.table(a, a)
    h = min(radius, tab.line.hi, -tab.line.lo)
    out = np.zeros(n_half)
    for l in range(tab.k + 1):
        g, _ = _chop(Chebyshev.interpolate(lambda s: tab(l, s, -s), degree, domain=[-h, h]))
        power = g.convert(kind=np.polynomial.Polynomial, domain=[-1, 1]).coef
        for p, c in enumerate(power):
            j = 2 * l + p
            if j < n_half:
                out[j] += 2 / math.sqrt(math.pi) * c * gaussian_moment(p)
    return out
