import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import beta

from oracles import theta_neumann
from qgheat.errors import AccuracyError, ConditioningError, UnsupportedProbeError
from qgheat.graph_model import interval, star
from qgheat.heat_engine import (
    FIT_EXPONENTS,
    SampledKernel,
    TraceExpansion,
    asymptotic_trace,
    compare_trace,
    convolve,
    convolve_kernel,
    fit_invariants,
    fit_slope,
    levi_correction,
    log_grid,
    per_decade,
    power_kernel_convolution,
)
from qgheat.parametrix import GraphParametrix
from qgheat.spectrum import spectral_heat_kernel, spectral_resolution

L = 2.0
NODES, WEIGHTS = np.polynomial.legendre.leggauss(6)
NODES, WEIGHTS = (NODES + 1) * L / 2, WEIGHTS * L / 2


def power(a, rows=NODES, cols=NODES, weights=WEIGHTS):
    return SampledKernel.from_function(lambda t, X, Y: t**a + 0 * X * Y, rows, cols,
                                       weights, order=a)


# ---------------------------------------------------------------- convolution


def test_constant_kernels():
    out = convolve(power(0.0), power(0.0), 0.3)
    assert np.allclose(out, L * 0.3, rtol=1e-13)


@given(st.floats(-0.5, 2.0), st.floats(-0.5, 2.0), st.floats(0.01, 2.0))
def test_beta_law(a, b, t):
    out = convolve(power(a), power(b), t)
    assert np.allclose(out, power_kernel_convolution(a, b, L, t), rtol=1e-6)
    assert power_kernel_convolution(a, b, L, t) == pytest.approx(
        L * t ** (a + b + 1) * beta(a + 1, b + 1), rel=1e-14)


def test_convolution_order_metadata_and_slope():
    for a, b in [(0.5, 1.0), (-0.5, 0.5), (1.5, 2.0)]:
        K = convolve_kernel(power(a), power(b))
        assert K.order == a + b + 1
        ts = np.geomspace(1e-3, 1e-1, 7)
        vals = [float(K(t)[0, 0]) for t in ts]
        slope, _ = fit_slope(ts, vals)
        assert slope == pytest.approx(a + b + 1, abs=1e-6)


def test_convolution_bilinear():
    rng = np.random.default_rng(0)
    M1, M2, M3 = (rng.standard_normal((6, 6)) for _ in range(3))
    P1 = SampledKernel.from_function(lambda t, X, Y: np.sqrt(t) * M1, NODES, NODES, WEIGHTS)
    P2 = SampledKernel.from_function(lambda t, X, Y: t * M2, NODES, NODES, WEIGHTS)
    Q = SampledKernel.from_function(lambda t, X, Y: np.exp(-t) * M3, NODES, NODES)
    lhs = convolve(P1.scaled(2.0) + P2, Q, 0.2, n_nodes=64)
    rhs = 2 * convolve(P1, Q, 0.2, n_nodes=64) + convolve(P2, Q, 0.2, n_nodes=64)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_convolution_reports_failure():
    wild = SampledKernel.from_function(lambda t, X, Y: np.sin(1e5 * t) + 0 * X * Y,
                                       NODES, NODES, WEIGHTS)
    with pytest.raises(AccuracyError):
        convolve(wild, power(0.0), 1.0)


def test_kernel_validation():
    with pytest.raises(ValueError):
        SampledKernel.from_function(lambda t, X, Y: 0 * X * Y, NODES, NODES, times=[0.2, 0.1])
    with pytest.raises(ValueError):
        SampledKernel.from_function(lambda t, X, Y: np.nan + 0 * X * Y, NODES, NODES,
                                    times=[0.1])
    with pytest.raises(ValueError):
        convolve(power(0.0, cols=NODES[:3], weights=WEIGHTS[:3]), power(0.0), 0.1)


# ---------------------------------------------------------------- Levi correction

COS_Q = interval(cosine=[0.3, -0.4, 0.8, 0.25])


@pytest.fixture(scope="module")
def cos_resolution():
    return spectral_resolution(COS_Q, 6000)


def test_levi_first_term_order():
    G = GraphParametrix(COS_Q, 1)
    x = y = ("e", 1.5)
    ts = np.geomspace(2e-3, 2e-2, 5)
    terms = [abs(levi_correction(COS_Q, 1, 1, t, x, y, parametrix=G).terms[0]) for t in ts]
    slope, _ = fit_slope(ts, terms)
    assert slope == pytest.approx(1.5, abs=0.1)


def test_levi_correction_improves_on_parametrix(cos_resolution):
    x, y, t = ("e", 1.5), ("e", 1.6), 0.01
    exact = spectral_heat_kernel(COS_Q, cos_resolution, t, x, y).value
    res = levi_correction(COS_Q, 1, 2, t, x, y)
    errs = np.abs(np.concatenate([[res.uncorrected], res.partial_sums]) - exact)
    assert errs[1] < errs[0] / 100
    assert errs[2] <= errs[1] * 1.01 + 1e-12
    assert res.within_envelope


def test_levi_rejects_points_near_vertex():
    with pytest.raises(UnsupportedProbeError):
        levi_correction(COS_Q, 1, 1, 0.01, ("e", 0.1), ("e", 1.5))
    q = star([1, 1, 1])
    with pytest.raises(UnsupportedProbeError):
        levi_correction(q, 1, 1, 0.01, ("e0", 0.5), ("e1", 0.5))


# ---------------------------------------------------------------- trace expansion


@pytest.mark.parametrize("t", [1e-3, 0.05, 0.3])
def test_free_interval_expansion(t):
    assert asymptotic_trace(interval(), 3, t) == pytest.approx(
        math.pi / math.sqrt(4 * math.pi * t) + 0.5, rel=1e-14)


def test_star_expansion_constant_term():
    # three Neumann leaves (+1 each) and a Kirchhoff centre of degree 3 (-1)
    assert asymptotic_trace(star([1, 2, 3]), 0, 1e-4) == pytest.approx(
        6 / math.sqrt(4 * math.pi * 1e-4) + 0.5, rel=1e-14)


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(-2, 2))
def test_expansion_linear_in_coefficients(b, v, c):
    t = np.array([0.01, 0.1])
    E1 = TraceExpansion(np.array(b), np.array(v))
    E2 = TraceExpansion(np.array(v), np.array(b))
    E = TraceExpansion(np.array(b) + c * np.array(v), np.array(v) + c * np.array(b))
    assert np.allclose(E(t), E1(t) + c * E2(t), rtol=1e-12, atol=1e-10)


def test_free_trace_comparison_exponentially_small():
    cmp_ = compare_trace(interval(), [0.02, 0.05, 0.1])
    assert np.max(np.abs(cmp_.residual)) < 1e-10
    assert cmp_.spectral[1] == pytest.approx(theta_neumann(0.05), abs=1e-12)
    assert cmp_.csv().startswith("t,spectral_trace,asymptotic_trace,residual,tail_bound\n")


def test_grids():
    g = per_decade(0.01, 0.1)
    assert g.size == 13 and g[0] == pytest.approx(0.01) and g[-1] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        log_grid(0.1, 0.01, 5)


# ---------------------------------------------------------------- fit

TRUE = np.array([2.0, 0.3, -0.7, 1.1, 0.05, -0.4, 0.2, 0.6])


def synthetic(t):
    t = np.asarray(t, float)
    return sum(c * t**p for c, p in zip(TRUE, FIT_EXPONENTS))


def test_fit_round_trip():
    # 100 samples: with 25 the float64 rounding of the samples alone moves the
    # t^(5/2) coefficient by about 2e-8
    t = log_grid(1e-3, 1e-1, 100)
    fit = fit_invariants(t, synthetic(t))
    assert np.max(np.abs(fit.coefficients / TRUE - 1)) < 1e-8
    est = fit.estimates
    assert est["length"][0] == pytest.approx(math.sqrt(4 * math.pi) * 2.0, rel=1e-8)
    assert est["vertex_weight"][0] == pytest.approx(4 * 0.3, rel=1e-8)
    assert fit.csv().split("\n")[0] == "parameter,estimate,stderr"


@given(st.permutations(list(range(20))), st.lists(st.integers(0, 19), max_size=10))
def test_fit_order_and_duplication_invariant(perm, dup):
    t = log_grid(1e-3, 1e-1, 20)
    base = fit_invariants(t, synthetic(t)).coefficients
    idx = np.array(list(perm) + list(dup), dtype=int)
    other = fit_invariants(t[idx], synthetic(t[idx])).coefficients
    assert np.array_equal(base, other)


def test_fit_reports_conditioning():
    t = log_grid(0.05, 0.051, 10)
    with pytest.raises(ConditioningError, match="0.05"):
        fit_invariants(t, synthetic(t))


def test_fit_needs_enough_samples():
    t = log_grid(1e-3, 1e-1, 5)
    with pytest.raises(ValueError):
        fit_invariants(t, synthetic(t))


def test_fit_on_theta_samples():
    t = log_grid(1e-3, 1e-1, 25)
    T = np.array([theta_neumann(s) for s in t])
    fit = fit_invariants(t, T)
    assert fit.estimates["length"][0] == pytest.approx(math.pi, abs=1e-6)
    assert fit.coefficients[FIT_EXPONENTS.index(0.0)] == pytest.approx(0.5, abs=1e-6)


def test_fit_on_shifted_theta_samples():
    # U = 1 shifts every eigenvalue by -1, so the trace gains a factor e^t
    t = log_grid(1e-3, 1e-1, 25)
    T = np.array([math.exp(s) * theta_neumann(s) for s in t])
    fit = fit_invariants(t, T)
    assert fit.estimates["potential_integral"][0] == pytest.approx(math.pi, abs=1e-3)


def test_levi_kernel_independent_of_order(cos_resolution):
    x, y, t = ("e", 1.5), ("e", 1.6), 0.01
    exact = spectral_heat_kernel(COS_Q, cos_resolution, t, x, y).value
    e1 = levi_correction(COS_Q, 1, 2, t, x, y).value
    e2 = levi_correction(COS_Q, 2, 2, t, x, y).value
    assert abs(e1 - e2) < 1e-8
    assert abs(e2 - exact) < 1e-8
