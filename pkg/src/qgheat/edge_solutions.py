"""Basis solutions of ``-y'' - U y = lam y`` on a single edge.

``y1`` and ``y2`` are normalized by ``y1(0) = 1, y1'(0) = 0`` and
``y2(0) = 0, y2'(0) = 1``.  Solutions for many spectral parameters are
integrated together as one first-order system, which is how the spectrum
module scans and refines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, IntegrationError
from .graph_model import EdgePotential

RTOL = 1e-12
ATOL = 1e-13
NEGATIVE_MARGIN = 100.0
LAMBDA_CAP = 1e6
CHUNK = 48


@dataclass(frozen=True)
class BasisSolutionPair:
    lam: float
    length: float
    end: np.ndarray  # (y1, y1', y2, y2') at x = L
    x: np.ndarray | None = None
    samples: np.ndarray | None = None  # shape (len(x), 4)

    @property
    def transfer_matrix(self) -> np.ndarray:
        y1, d1, y2, d2 = self.end
        return np.array([[y1, y2], [d1, d2]])

    def wronskian(self) -> np.ndarray:
        """``y1 y2' - y1' y2`` at the endpoint and at every sample."""
        rows = [self.end] if self.samples is None else [self.end, *self.samples]
        r = np.asarray(rows)
        return r[:, 0] * r[:, 3] - r[:, 1] * r[:, 2]

    def as_table(self) -> np.ndarray:
        """Rows ``(x, y1, y1', y2, y2')`` for the requested points."""
        if self.samples is None:
            return np.empty((0, 5))
        return np.column_stack([self.x, self.samples])


def _check_lambda(potential: EdgePotential, lams: np.ndarray) -> None:
    lo = -(potential.sup_bound + NEGATIVE_MARGIN)
    if np.any(lams < lo) or np.any(lams > LAMBDA_CAP) or not np.all(np.isfinite(lams)):
        raise DomainError(f"spectral parameter outside [{lo:g}, {LAMBDA_CAP:g}]")


def _analytic(c: float, lams: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Closed form for ``U = c``; returns shape (n_lam, n_x, 4)."""
    w2 = (lams + c)[:, None]
    xx = x[None, :]
    out = np.empty(w2.shape[:1] + x.shape + (4,))
    pos = np.broadcast_to(w2 >= 0, out.shape[:2])
    w = np.sqrt(np.abs(w2))
    wx = w * xx
    with np.errstate(invalid="ignore", over="ignore"):
        cos, sin = np.cos(wx), np.sinc(wx / np.pi) * xx
        cosh, sinh = np.cosh(wx), np.where(wx == 0, xx, np.sinh(wx) / np.where(w == 0, 1, w))
        out[..., 0] = np.where(pos, cos, cosh)
        out[..., 1] = np.where(pos, -w * np.sin(wx), w * np.sinh(wx))
        out[..., 2] = np.where(pos, sin, sinh)
        out[..., 3] = np.where(pos, cos, cosh)
    return out


def _integrate(potential: EdgePotential, lams: np.ndarray, x: np.ndarray | None,
               rtol: float, atol: float) -> tuple[np.ndarray, np.ndarray | None]:
    n = lams.size
    L = potential.length
    omega = np.sqrt(np.max(np.abs(lams)) + potential.sup_bound)
    max_step = min(L / 4, np.pi / (8 * omega)) if omega > 0 else L / 4

    def rhs(s, Y):
        y = Y.reshape(4, n)
        q = -(lams + potential(s))
        return np.concatenate([y[1], q * y[0], y[3], q * y[2]])

    y0 = np.concatenate([np.ones(n), np.zeros(n), np.zeros(n), np.ones(n)])
    t_eval = None
    if x is not None and x.size:
        t_eval = np.unique(np.concatenate([x, [L]]))
    sol = solve_ivp(rhs, (0.0, L), y0, method="DOP853", rtol=rtol, atol=atol,
                    max_step=max_step, t_eval=t_eval)
    if sol.status != 0:
        raise IntegrationError(f"basis integration failed: {sol.message}",
                               estimate=float(sol.t[-1]) if sol.t.size else None)
    end = sol.y[:, -1].reshape(4, n).T
    samples = None
    if t_eval is not None:
        Y = sol.y.reshape(4, n, -1).transpose(1, 2, 0)  # (n, nt, 4)
        samples = Y[:, np.searchsorted(sol.t, x), :]
    return end, samples


def basis_batch(potential: EdgePotential, lams, points=None, *, method: str = "auto",
                rtol: float = RTOL, atol: float = ATOL):
    """Endpoint data (and optional samples) for many spectral parameters.

    Returns:
        tuple: ``end`` of shape (n, 4) and ``samples`` of shape
        (n, len(points), 4) or ``None``.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    _check_lambda(potential, lams)
    x = None if points is None else np.atleast_1d(np.asarray(points, dtype=float))
    if x is not None and (np.any(x < 0) or np.any(x > potential.length)):
        raise DomainError("requested points outside the edge")
    if method == "analytic" or (method == "auto" and potential.is_constant):
        if not potential.is_constant:
            raise ValueError("analytic basis needs a constant potential")
        c = potential.coefficients[0]
        end = _analytic(c, lams, np.array([potential.length]))[:, 0, :]
        samples = None if x is None else _analytic(c, lams, x)
        return end, samples
    order = np.argsort(lams)
    end = np.empty((lams.size, 4))
    samples = None if x is None else np.empty((lams.size, x.size, 4))
    for start in range(0, lams.size, CHUNK):
        idx = order[start:start + CHUNK]
        e, s = _integrate(potential, lams[idx], x, rtol, atol)
        end[idx] = e
        if samples is not None:
            samples[idx] = s
    return end, samples


def solve_basis(potential: EdgePotential, lam: float, points=None, **kw) -> BasisSolutionPair:
    end, samples = basis_batch(potential, [lam], points, **kw)
    x = None if points is None else np.atleast_1d(np.asarray(points, dtype=float))
    return BasisSolutionPair(float(lam), potential.length, end[0], x,
                             None if samples is None else samples[0])


@dataclass(frozen=True)
class RemainderReport:
    k: float
    max_e1: float
    max_e2: float
    bound_l2: float
    bound_l1: float
    norm_l2: float
    norm_l1: float

    @property
    def holds(self) -> bool:
        return max(self.max_e1, self.max_e2) <= self.bound_l2


def remainder_bound_check(potential: EdgePotential, k: float, n_points: int = 2001,
                          **kw) -> RemainderReport:
    """Compare the deviation from ``cos kx``, ``sin kx`` with ``exp(|U| L) / k``.

    The second solution is rescaled to ``y2'(0) = k`` before comparing.  The
    norm of U is reported both ways; ``holds`` uses the L2 reading.
    """
    if k <= 0:
        raise DomainError("k must be positive")
    L = potential.length
    x = np.linspace(0.0, L, n_points)
    sol = solve_basis(potential, k * k, x, **kw)
    e1 = np.max(np.abs(sol.samples[:, 0] - np.cos(k * x)))
    e2 = np.max(np.abs(k * sol.samples[:, 2] - np.sin(k * x)))
    n2, n1 = potential.l2_norm(), potential.l1_norm()
    return RemainderReport(k, float(e1), float(e2), float(np.exp(n2 * L) / k),
                           float(np.exp(n1 * L) / k), n2, n1)
