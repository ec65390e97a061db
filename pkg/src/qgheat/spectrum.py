"""Eigenvalues, eigenfunctions and spectral heat quantities.

The unknowns are the coefficients ``(a_e, b_e)`` of ``theta|_e = a y1 + b y2``
on every edge; each vertex contributes ``deg(v)`` rows
``A_v (values) + B_v (outward derivatives)``.  Eigenvalues are the points
where this ``2E x 2E`` secular matrix loses rank.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erfc

from .edge_solutions import basis_batch
from .errors import (
    IncompleteSpectrumError,
    InconsistencyError,
    InsufficientSpectrumError,
)
from .graph_model import Point, QuantumGraph

KERNEL_TOL = 1e-7
NEGATIVE_STEP = 0.05
NEGATIVE_MARGIN = 10.0
PANEL_NODES = 8


def n_workers() -> int:
    env = os.environ.get("QGHEAT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _edge_ends(q: QuantumGraph, lams: np.ndarray) -> dict[str, np.ndarray]:
    edges = q.graph.edges
    if len(edges) == 1 or n_workers() == 1:
        return {e.id: basis_batch(q.potentials[e.id], lams)[0] for e in edges}
    with ThreadPoolExecutor(min(n_workers(), len(edges))) as pool:
        ends = pool.map(lambda e: basis_batch(q.potentials[e.id], lams)[0], edges)
        return {e.id: end for e, end in zip(edges, ends)}


def _assemble(q: QuantumGraph, lams: np.ndarray, ends: dict[str, np.ndarray],
              scaled: bool) -> np.ndarray:
    n = lams.size
    E = q.n_edges
    col = {e.id: 2 * i for i, e in enumerate(q.graph.edges)}
    bscale = np.sqrt(np.maximum(1.0, np.abs(lams))) if scaled else np.ones(n)
    dtype = float if q.is_real else complex
    M = np.zeros((n, 2 * E, 2 * E), dtype=dtype)
    row = 0
    for v in q.graph.vertices:
        cond = q.conditions[v]
        vend = q.graph.ends(v)
        deg = len(vend)
        val = np.zeros((n, deg, 2 * E))
        der = np.zeros((n, deg, 2 * E))
        for j, end in enumerate(vend):
            c = col[end.edge]
            if end.side == 0:
                val[:, j, c] = 1.0
                der[:, j, c + 1] = bscale
            else:
                y1, d1, y2, d2 = ends[end.edge].T
                val[:, j, c] = y1
                val[:, j, c + 1] = y2 * bscale
                der[:, j, c] = -d1
                der[:, j, c + 1] = -d2 * bscale
        A, B = (cond.A.real, cond.B.real) if q.is_real else (cond.A, cond.B)
        M[:, row:row + deg, :] = np.einsum("rj,njc->nrc", A, val) + np.einsum(
            "rj,njc->nrc", B, der)
        row += deg
    if scaled:
        # a row can vanish up to rounding (loop continuity at k * length in 2 pi Z);
        # the floor keeps that residue from being blown up to unit size
        norm = np.max(np.abs(M), axis=2, keepdims=True)
        floor = 1e-4 * np.max(norm, axis=1, keepdims=True)
        M /= np.maximum(norm, np.maximum(floor, 1e-300))
    return M


def secular_matrix(q: QuantumGraph, lam: float) -> np.ndarray:
    """Unscaled secular matrix; its kernel holds the per-edge coefficients."""
    lams = np.array([float(lam)])
    return _assemble(q, lams, _edge_ends(q, lams), scaled=False)[0]


def scaled_secular(q: QuantumGraph, lams) -> np.ndarray:
    """Secular matrices with b-columns scaled by sqrt|lam| and unit-sup rows."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    return _assemble(q, lams, _edge_ends(q, lams), scaled=True)


def _probe(q: QuantumGraph, lams: np.ndarray):
    M = scaled_secular(q, lams)
    s = np.linalg.svd(M, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):  # exactly singular grid points
        det = np.linalg.det(M).real if q.is_real else np.full(lams.size, np.nan)
    return det, s[:, -1] / s[:, 0]


# --------------------------------------------------------------------------
# root location


def _illinois(f, a, b, fa, fb, rtol=4e-15, max_iter=200):
    """Lockstep modified regula falsi on many sign-change brackets."""
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    side = np.zeros(a.size, dtype=int)
    done = np.zeros(a.size, dtype=bool)
    root = 0.5 * (a + b)
    for _ in range(max_iter):
        act = ~done
        if not act.any():
            break
        width = b - a
        c = b - fb * width / (fb - fa)
        bad = ~np.isfinite(c) | (c <= a) | (c >= b)
        c = np.where(bad, 0.5 * (a + b), c)
        idx = np.flatnonzero(act)
        fc = np.zeros_like(c)
        fc[idx] = f(c[idx])
        zero = act & (fc == 0)
        root[zero] = c[zero]
        done |= zero
        act &= ~zero
        left = act & (np.sign(fc) == np.sign(fa))
        right = act & ~left
        # keep the bracket on the opposite side; Illinois halving on repeats
        a = np.where(left, c, a)
        fa = np.where(left, fc, fa)
        fb = np.where(left & (side == 1), fb / 2, fb)
        b = np.where(right, c, b)
        fb = np.where(right, fc, fb)
        fa = np.where(right & (side == -1), fa / 2, fa)
        side = np.where(left, 1, np.where(right, -1, side))
        conv = act & (b - a <= rtol * np.maximum(1.0, np.abs(c)) + 1e-300)
        root[conv] = 0.5 * (a[conv] + b[conv])
        done |= conv
    root[~done] = 0.5 * (a[~done] + b[~done])
    return root


def _golden(f, a, b, rtol=1e-13, max_iter=120):
    """Lockstep golden-section minimization."""
    g = (math.sqrt(5) - 1) / 2
    a, b = np.array(a, dtype=float), np.array(b, dtype=float)
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a <= rtol * np.maximum(1.0, np.abs(a))):
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new = np.where(left, b - g * (b - a), a + g * (b - a))
        fnew = f(new)
        d, fd, c, fc = (np.where(left, c, new), np.where(left, fc, fnew),
                        np.where(left, new, d), np.where(left, fnew, fd))
    return np.where(fc < fd, c, d)


def scan_grid(q: QuantumGraph, lambda_max: float, k_step: float | None = None) -> np.ndarray:
    k_step = k_step or np.pi / (8 * q.total_length)
    lo = -(q.potential_sup + NEGATIVE_MARGIN)
    neg = np.arange(lo, 0.0, NEGATIVE_STEP)
    kmax = math.sqrt(max(lambda_max, 0.0))
    k = np.arange(0.0, kmax + 2 * k_step, k_step)
    return np.concatenate([neg, k * k])


@dataclass(frozen=True)
class WeylReport:
    K0: float
    K1: float
    count: int
    prediction: float
    slack: float

    @property
    def deviation(self) -> float:
        return abs(self.count - self.prediction)

    @property
    def passed(self) -> bool:
        return self.deviation < self.slack


@dataclass(frozen=True, eq=False)
class SpectralResolution:
    """Eigenvalues (with multiplicity) and, optionally, eigenfunctions.

    ``coefficients[j, i]`` is ``(a, b)`` on edge ``i`` (graph order) such that
    ``theta_j = a y1 + b y2`` there.
    """

    q: QuantumGraph
    lambda_max: float
    roots: np.ndarray
    multiplicities: np.ndarray
    coefficients: np.ndarray | None = None
    norms: np.ndarray | None = None
    grid: dict | None = field(default=None, repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.repeat(self.roots, self.multiplicities)

    @property
    def k_values(self) -> np.ndarray:
        lam = self.eigenvalues
        return np.sqrt(lam[lam > 0])

    def __len__(self):
        return int(self.multiplicities.sum())

    def values(self, points) -> np.ndarray:
        """Eigenfunction values, shape ``(n_eigen, len(points))``."""
        if self.coefficients is None:
            raise InconsistencyError("eigenfunctions have not been computed")
        pts = [Point(*p) for p in points]
        out = np.zeros((len(self), len(pts)), dtype=self.coefficients.dtype)
        lams = self.eigenvalues
        index = {e.id: i for i, e in enumerate(self.q.graph.edges)}
        for eid in {p.edge for p in pts}:
            cols = [j for j, p in enumerate(pts) if p.edge == eid]
            xs = np.array([pts[j].x for j in cols])
            _, samp = basis_batch(self.q.potentials[eid], lams, xs)
            ab = self.coefficients[:, index[eid], :]
            out[:, cols] = ab[:, 0, None] * samp[..., 0] + ab[:, 1, None] * samp[..., 2]
        return out

    def sup_norms(self) -> np.ndarray:
        return np.max(np.abs(self.grid["values"]), axis=1)

    def gram(self) -> np.ndarray:
        V = self.grid["values"][:, self.grid["interior"]]
        w = self.grid["weights"]
        return (V.conj() * w) @ V.T


def find_eigenvalues(q: QuantumGraph, lambda_max: float, *, k_step: float | None = None,
                     check_weyl: bool = True) -> SpectralResolution:
    """Locate every eigenvalue up to ``lambda_max``.

    Scans the secular determinant and the smallest relative singular value,
    refines sign changes by regula falsi and sign-free singular-value dips by
    golden section, and counts multiplicity from the numerical kernel.
    """
    if not lambda_max > -q.potential_sup:
        raise ValueError("lambda_max must exceed -sup|U|")
    grid = scan_grid(q, lambda_max, k_step)
    det, srel = _probe(q, grid)
    roots: list[float] = []
    use_det = q.is_real
    sign = np.sign(det) if use_det else np.zeros_like(grid)
    exact = np.flatnonzero(sign == 0) if use_det else np.array([], dtype=int)
    roots += list(grid[exact])
    change = np.flatnonzero(sign[:-1] * sign[1:] < 0) if use_det else np.array([], dtype=int)
    if change.size:
        f = lambda lam: _probe(q, lam)[0]
        roots += list(_illinois(f, grid[change], grid[change + 1], det[change],
                                det[change + 1]))
    near_change = set(change) | set(change + 1) | set(exact)
    dips = [i for i in range(1, grid.size - 1)
            if srel[i] <= srel[i - 1] and srel[i] <= srel[i + 1] and i not in near_change]
    if dips:
        dips = np.array(dips)
        cand = _golden(lambda lam: _probe(q, lam)[1], grid[dips - 1], grid[dips + 1])
        ok = _probe(q, cand)[1] < KERNEL_TOL
        roots += list(cand[ok])
    roots = np.sort(np.array(roots, dtype=float))
    if roots.size:
        keep = np.concatenate([[True], np.diff(roots) > 1e-9 * np.maximum(1, np.abs(roots[1:]))])
        roots = roots[keep]
    roots = roots[roots <= lambda_max + 1e-10 * max(1.0, abs(lambda_max))]
    mult = np.ones(roots.size, dtype=int)
    if roots.size:
        s = np.linalg.svd(scaled_secular(q, roots), compute_uv=False)
        mult = np.maximum(1, np.sum(s / s[:, :1] < KERNEL_TOL, axis=1))
    res = SpectralResolution(q, float(lambda_max), roots, mult)
    if check_weyl and lambda_max > 0:
        rep = weyl_check(res, 0.0, math.sqrt(lambda_max), q)
        if not rep.passed:
            raise IncompleteSpectrumError(
                f"Weyl count violated on k in (0, {rep.K1:.6g}): found {rep.count}, "
                f"expected {rep.prediction:.3f} +- {rep.slack}", interval=(0.0, rep.K1))
    return res


def weyl_check(resolution: SpectralResolution, K0: float, K1: float,
               q: QuantumGraph | None = None) -> WeylReport:
    q = q or resolution.q
    k = resolution.k_values
    count = int(np.sum((k > K0) & (k < K1)))
    return WeylReport(K0, K1, count, q.total_length / np.pi * (K1 - K0), 2.0 * q.n_edges)


# --------------------------------------------------------------------------
# eigenfunctions


def quadrature_grid(q: QuantumGraph, k_max: float, nodes: int = PANEL_NODES):
    """Composite Gauss-Legendre nodes, at least 8 panels per wavelength."""
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    out = {}
    for e in q.graph.edges:
        waves = k_max * e.length / (2 * np.pi)
        npanel = max(4, int(np.ceil(8 * waves)))
        br = np.linspace(0.0, e.length, npanel + 1)
        h = np.diff(br)
        x = (br[:-1, None] + (xg[None, :] + 1) * h[:, None] / 2).ravel()
        w = (wg[None, :] * h[:, None] / 2).ravel()
        out[e.id] = (x, w)
    return out


def eigenfunctions(q: QuantumGraph, resolution: SpectralResolution) -> SpectralResolution:
    """Kernel vectors per eigenvalue, orthonormalized in ``L^2(G)``."""
    roots, mult = resolution.roots, resolution.multiplicities
    lams = np.repeat(roots, mult)
    E = q.n_edges
    M = scaled_secular(q, roots)
    _, s, Vh = np.linalg.svd(M)
    coef = np.zeros((lams.size, 2 * E), dtype=M.dtype)
    bscale = np.sqrt(np.maximum(1.0, np.abs(roots)))
    pos = 0
    for i, m in enumerate(mult):
        if np.sum(s[i] / s[i, 0] < 10 * KERNEL_TOL) < m:
            raise InconsistencyError(
                f"kernel at lambda={roots[i]:.12g} is smaller than multiplicity {m}")
        vec = Vh[i, -m:, :].conj()
        vec[:, 1::2] *= bscale[i]
        coef[pos:pos + m] = vec
        pos += m
    k_max = math.sqrt(max(float(np.max(np.abs(lams), initial=0.0)), 1.0))
    grid = quadrature_grid(q, k_max)
    values, weights, interior = [], [], []
    for i, e in enumerate(q.graph.edges):
        x, w = grid[e.id]
        pts = np.concatenate([x, [0.0, e.length]])
        _, samp = basis_batch(q.potentials[e.id], lams, pts)
        a, b = coef[:, 2 * i], coef[:, 2 * i + 1]
        values.append(a[:, None] * samp[..., 0] + b[:, None] * samp[..., 2])
        weights.append(w)
        interior.append(np.r_[np.ones(x.size, bool), False, False])
    V = np.concatenate(values, axis=1)
    w = np.concatenate(weights)
    inner = np.concatenate(interior)
    pos = 0
    norms = np.empty(lams.size)
    for m in mult:
        blk = slice(pos, pos + m)
        Vi = V[blk][:, inner]
        G = (Vi.conj() * w) @ Vi.T
        evals, evecs = np.linalg.eigh(G)
        T = evecs @ np.diag(evals ** -0.5) @ evecs.conj().T
        coef[blk] = T.T @ coef[blk]
        V[blk] = T.T @ V[blk]
        norms[blk] = np.sqrt(evals)
        pos += m
    if q.is_real:
        coef, V = coef.real, V.real
    return replace(resolution, coefficients=coef.reshape(lams.size, E, 2), norms=norms,
                   grid={"values": V, "weights": w, "interior": inner, "nodes": grid})


def spectral_resolution(q: QuantumGraph, lambda_max: float, **kw) -> SpectralResolution:
    return eigenfunctions(q, find_eigenvalues(q, lambda_max, **kw))


# --------------------------------------------------------------------------
# heat trace and kernel


@dataclass(frozen=True)
class HeatValue:
    value: float
    tail_bound: float

    def __float__(self):
        return self.value


def trace_tail_bound(q: QuantumGraph, lambda_max: float, t: float) -> float:
    """Bound on the sum of ``exp(-lam t)`` over eigenvalues above ``lambda_max``.

    Each unit k-interval holds at most ``L/pi + 2E`` eigenvalues (Weyl), so the
    tail is below ``(L/pi + 2E)(exp(-K^2 t) + int_K^inf exp(-k^2 t) dk)``.
    """
    if lambda_max <= 0:
        return math.inf
    K = math.sqrt(lambda_max)
    density = q.total_length / math.pi + 2 * q.n_edges
    integral = 0.5 * math.sqrt(math.pi / t) * erfc(K * math.sqrt(t))
    return density * (math.exp(-lambda_max * t) + integral)


def required_lambda_max(q: QuantumGraph, t: float, tol: float) -> float:
    lam = max(1.0, q.potential_sup)
    while trace_tail_bound(q, lam, t) > tol:
        lam *= 1.25
    return lam


def spectral_heat_trace(q: QuantumGraph, resolution: SpectralResolution, t: float,
                        tol: float = 1e-8) -> HeatValue:
    """``sum_j exp(-lam_j t)`` with a rigorous bound on the omitted tail."""
    if t <= 0:
        raise ValueError("t must be positive")
    tail = trace_tail_bound(q, resolution.lambda_max, t)
    if tail > tol:
        need = required_lambda_max(q, t, tol)
        raise InsufficientSpectrumError(
            f"spectrum up to {resolution.lambda_max:g} leaves tail {tail:.3g} at t={t:g}; "
            f"need lambda_max >= {need:.6g}", required_lambda_max=need)
    lam = resolution.eigenvalues
    return HeatValue(float(np.sum(np.exp(-lam * t))), tail)


def spectral_heat_kernel(q: QuantumGraph, resolution: SpectralResolution, t: float, x, y,
                         tol: float = 1e-8) -> HeatValue:
    """Pointwise ``sum_j exp(-lam_j t) theta_j(x) theta_j(y)``.

    The tail is bounded with the empirical eigenfunction sup bound ``C`` as
    ``C^2`` times the trace tail.
    """
    return spectral_heat_kernel_matrix(q, resolution, t, [x], [y], tol)[0]


def spectral_heat_kernel_matrix(q, resolution, t, xs, ys, tol=1e-8, pairwise=True):
    """Kernel at ``(xs[i], ys[i])`` (pairwise) or on the full product grid."""
    if resolution.coefficients is None:
        resolution = eigenfunctions(q, resolution)
    C = float(np.max(resolution.sup_norms(), initial=0.0))
    tail = C * C * trace_tail_bound(q, resolution.lambda_max, t)
    if tail > tol:
        need = required_lambda_max(q, t, tol / max(C * C, 1.0))
        raise InsufficientSpectrumError(
            f"kernel tail {tail:.3g} exceeds tolerance at t={t:g}; "
            f"need lambda_max >= {need:.6g}", required_lambda_max=need)
    wt = np.exp(-resolution.eigenvalues * t)
    Vx = resolution.values(xs)
    Vy = resolution.values(ys)
    if pairwise:
        vals = np.einsum("j,ji,ji->i", wt, Vx, Vy.conj()).real
        return [HeatValue(float(v), tail) for v in vals]
    return (Vx.T * wt) @ Vy.conj(), tail


def spectrum_csv(resolution: SpectralResolution) -> str:
    lines = ["index,lambda,k,multiplicity"]
    for i, (lam, m) in enumerate(zip(resolution.roots, resolution.multiplicities)):
        k = "" if lam < 0 else format(math.sqrt(lam), ".17g")
        lines.append(f"{i},{format(float(lam), '.17g')},{k},{int(m)}")
    return "\n".join(lines) + "\n"
