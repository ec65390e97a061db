import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import FIXTURES
from oracles import diagonal_u_taylor, gauss as gauss_ref
from qgheat.errors import UnsupportedConditionsError, ValidationError, UnsupportedOrderError, UnsupportedProbeError
from qgheat.graph_model import EdgePotential, Point, build_graph, interval, load_graph, star
from qgheat.parametrix import (
    CutoffSystem,
    GraphParametrix,
    EdgeGrid,
    PotentialLine,
    StarParametrix,
    UFunctionTable,
    boundary_coefficients,
    boundary_integral,
    boundary_series,
    eta,
    eval_graph_parametrix,
    eval_real_line_parametrix,
    eval_star_parametrix,
    heat_coefficients,
    line_residual,
    u_diagonal_closed,
    u_levels,
    u_recursive,
    vertex_derivatives,
    vertex_series_fit,
)

WAVY = EdgePotential((0.3, -0.4, 0.8, 0.25), math.pi)  # smooth test potential on [0, pi]


def const_line(c, lo=-3.0, hi=3.0):
    return PotentialLine.from_callable(lambda z: c + 0 * z, lo, hi)


# ---------------------------------------------------------------- u-functions


def test_zero_potential_gives_trivial_levels():
    assert np.allclose(u_levels(const_line(0.0), 0.3, 1.1, 4), [1, 0, 0, 0, 0], atol=1e-15)


@given(st.floats(-2, 2), st.integers(0, 5), st.floats(-1, 1), st.floats(-1, 1))
def test_constant_potential_levels(c, l, x, y):
    assert u_recursive(const_line(c), x, y, l) == pytest.approx(c**l / math.factorial(l),
                                                                abs=1e-12)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_linear_potential_first_level(x, y):
    line = PotentialLine.from_callable(lambda z: z, -3, 3)
    assert u_recursive(line, x, y, 1) == pytest.approx((x + y) / 2, abs=1e-12)


def test_closed_diagonal_matches_recursion_at_random_points():
    rng = np.random.default_rng(7)
    line = PotentialLine.from_edge(WAVY)
    for x in rng.uniform(0.3, math.pi - 0.3, 20):
        for l in range(4):
            rec = u_recursive(line, x, x, l)
            closed = float(u_diagonal_closed(WAVY, x, l))
            indep = diagonal_u_taylor(*(float(WAVY(x, n)) for n in (0, 1, 2, 4)), l)
            assert closed == pytest.approx(indep, rel=1e-12, abs=1e-14)
            assert abs(rec - closed) <= 1e-8 * max(1.0, abs(closed))


def test_recursion_is_local():
    eps = 0.3  # exceeds the padding the recursion uses around [x, y]
    x, y = 1.0, 1.4
    base = PotentialLine.from_edge(WAVY)

    def changed(z, order=0):
        z = np.asarray(z, dtype=float)
        bump = np.where((z < x - eps - 0.2) | (z > y + eps + 0.2), 5.0, 0.0)
        return WAVY(z, order) + (bump if order == 0 else 0.0)

    other = PotentialLine(changed, 0.0, math.pi, base.frequency)
    assert np.allclose(u_levels(base, x, y, 4), u_levels(other, x, y, 4), atol=1e-13)


def test_transport_equation_holds_on_table():
    tab = UFunctionTable(PotentialLine.from_edge(WAVY), 4)
    rng = np.random.default_rng(3)
    x = rng.uniform(0.5, 2.5, 15)
    y = rng.uniform(0.5, 2.5, 15)
    for l in range(1, 5):
        lhs = l * tab(l, x, y) + (y - x) * tab(l, x, y, dy=1)
        rhs = tab(l - 1, x, y, dy=2) + WAVY(y) * tab(l - 1, x, y)
        assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_table_symmetric_in_its_arguments():
    tab = UFunctionTable(PotentialLine.from_edge(WAVY), 3)
    x, y = np.array([0.6, 1.3, 2.2]), np.array([1.7, 0.9, 2.9])
    for l in range(4):
        assert np.allclose(tab(l, x, y), tab(l, y, x), atol=1e-9)


def test_line_residual_is_last_level_remainder():
    # the truncated series leaves exactly -f t^k (u_k'' + V u_k) behind
    tab = UFunctionTable(PotentialLine.from_edge(WAVY), 2)
    t, z = 0.01, np.array([1.0, 1.25, 1.5])
    x = np.full_like(z, 1.2)
    r = line_residual(tab, t, x, z)
    exact = -gauss_ref(t, 0) * np.exp(-(x - z) ** 2 / (4 * t)) * t**2 * (
        tab(2, x, z, dy=2) + WAVY(z) * tab(2, x, z))
    assert np.allclose(r, exact, rtol=1e-9, atol=1e-14)


def test_real_line_parametrix_table_agrees_with_direct():
    line = PotentialLine.from_edge(WAVY)
    tab = UFunctionTable(line, 3)
    a = eval_real_line_parametrix(line, 3, 0.02, 1.0, 1.2)
    b = eval_real_line_parametrix(tab, 3, 0.02, 1.0, 1.2)
    assert a == pytest.approx(b, rel=1e-10)


def test_order_limit():
    with pytest.raises(UnsupportedOrderError):
        u_levels(const_line(1.0), 0, 0, 9)


# ---------------------------------------------------------------- star parametrix


@pytest.mark.parametrize("kind,sign", [("neumann", 1.0), ("dirichlet", -1.0)])
def test_single_vertex_image_formula(kind, sign):
    S = StarParametrix(interval(left=kind), "a", 2)
    t, x, y = 0.05, 0.3, 0.7
    ref = gauss_ref(t, x - y) + sign * gauss_ref(t, x + y)
    assert eval_star_parametrix(S, t, 0, x, 0, y) == pytest.approx(ref, rel=1e-13)


def test_kirchhoff_three_star_free_case():
    S = StarParametrix(star([1, 1, 1]), "c", 1)
    t, x, y = 0.03, 0.2, 0.45
    assert S.value(t, 0, x, 0, y) == pytest.approx(
        gauss_ref(t, x - y) - gauss_ref(t, x + y) / 3, rel=1e-13)
    assert S.value(t, 0, x, 2, y) == pytest.approx(2 * gauss_ref(t, x + y) / 3, rel=1e-13)


def test_star_satisfies_kirchhoff_conditions_with_potential():
    q = star([1.0, 1.0, 1.0], cosine=[0.4, 0.7, -0.2])
    S = StarParametrix(q, "c", 3)
    t, x = 0.02, 0.15
    for a in range(3):
        vals = [S.value(t, a, x, b, 0.0) for b in range(3)]
        assert np.ptp(vals) < 1e-9 * max(abs(v) for v in vals)
        flux = sum(S.dy(t, a, x, b, 0.0) for b in range(3))
        assert abs(flux) < 1e-8 * max(abs(S.dy(t, a, x, b, 0.0)) for b in range(3))


def test_star_dirichlet_vertex_vanishes():
    S = StarParametrix(star([1.0, 1.0, 1.0], center="dirichlet", cosine=[0.5]), "c", 2)
    assert abs(S.value(0.02, 1, 0.2, 1, 0.0)) < 1e-12


def test_star_symmetric():
    q = star([1.0, 1.0, 1.0], cosine=[0.4, 0.7, -0.2])
    S = StarParametrix(q, "c", 2)
    t = 0.02
    assert S.value(t, 0, 0.2, 1, 0.35) == pytest.approx(S.value(t, 1, 0.35, 0, 0.2), rel=1e-8)


def test_robin_vertex_rejected():
    with pytest.raises(ValidationError, match="non-Robin"):
        load_graph(FIXTURES / "robin_interval.json")


def test_star_without_sigma_rejected():
    q = star([1, 1, 1])
    cond = q.conditions["c"]
    broken = type(q)(q.graph, {**q.conditions, "c": type(cond)(**{**cond.__dict__, "sigma": None})},
                     q.potentials)
    with pytest.raises(UnsupportedConditionsError):
        StarParametrix(broken, "c", 1)


# ---------------------------------------------------------------- cut-offs


def test_eta_shape():
    x = np.linspace(-1, 2, 3001)
    e = eta(x)
    assert np.all(e[x <= 1 / 3] == 1) and np.all(e[x >= 2 / 3] == 0)
    assert np.allclose(eta(1 - x), 1 - e, atol=1e-15)
    assert np.all(np.diff(e) <= 1e-16)


def test_eta_derivatives_match_differences():
    x, h = np.linspace(0.36, 0.64, 9), 1e-5
    d1 = (eta(x + h) - eta(x - h)) / (2 * h)
    d2 = (eta(x + h) - 2 * eta(x) + eta(x - h)) / h**2
    assert np.allclose(eta(x, 1), d1, atol=1e-7)
    assert np.allclose(eta(x, 2), d2, atol=1e-3)


def test_partition_of_unity():
    q = load_graph(FIXTURES / "triangle_subdivided.json")
    cut = CutoffSystem.for_graph(q)
    rng = np.random.default_rng(1)
    edges = q.graph.edges
    for _ in range(1000):
        e = edges[rng.integers(len(edges))]
        p = Point(e.id, float(rng.uniform(0, e.length)))
        assert cut.partition_sum(p) == pytest.approx(1.0, abs=1e-14)


def test_cutoff_scale_validated():
    with pytest.raises(ValueError):
        CutoffSystem.for_graph(star([1, 1, 1]), l0=2.0)


# ---------------------------------------------------------------- graph parametrix


def test_graph_parametrix_matches_line_away_from_vertices():
    q = interval(length=math.pi, cosine=[0.3, -0.4, 0.8, 0.25])
    t, x, y = 1e-3, 1.5, 1.53
    line = PotentialLine.from_edge(q.potentials["e"])
    ref = eval_real_line_parametrix(line, 3, t, x, y)
    assert eval_graph_parametrix(q, 3, t, ("e", x), ("e", y)) == pytest.approx(ref, rel=1e-9)


def test_graph_parametrix_zero_beyond_cutoff():
    q = star([1, 1, 1])
    G = GraphParametrix(q, 2)
    assert G.value(0.1, ("e0", 0.2), ("e1", 0.2)) == 0.0  # distance 0.4 > l0/3
    assert G.value(0.1, ("e0", 0.1), ("e1", 0.1)) != 0.0


def test_graph_parametrix_at_vertex_equals_star():
    q = star([1.0, 1.0, 1.0], cosine=[0.4, 0.7, -0.2])
    G = GraphParametrix(q, 3)
    S = G.star("c")
    ends = q.graph.ends("c")
    a = next(i for i, e in enumerate(ends) if e.edge == "e1")
    assert G.value(0.01, ("e1", 0.0), ("e1", 0.0)) == pytest.approx(
        S.value(0.01, a, 0.0, a, 0.0), rel=1e-14)


def test_graph_parametrix_rejects_loops():
    q = build_graph({"a": "kirchhoff"}, [{"id": "x", "from": "a", "to": "a", "length": 1.0}])
    with pytest.raises(ValueError):
        GraphParametrix(q, 1)


def test_residual_rejects_vertex_probe():
    with pytest.raises(UnsupportedProbeError):
        GraphParametrix(star([1, 1, 1]), 1).residual(0.01, ("e0", 0.1), ("e0", 0.0))


def test_analytic_residual_matches_finite_differences():
    q = star([1.0, 1.0, 1.0], cosine=[0.4, 0.7, -0.2])
    G = GraphParametrix(q, 2)
    x = ("e1", 0.2)
    t, h, ht = 0.01, 1e-4, 1e-6
    for yv in (0.25, 0.33, 0.45):  # inside and across the cut-off transition
        val = lambda s, z: G.value(s, x, ("e1", z))
        dt = (val(t + ht, yv) - val(t - ht, yv)) / (2 * ht)
        dzz = (val(t, yv + h) - 2 * val(t, yv) + val(t, yv - h)) / h**2
        U = float(q.potentials["e1"](yv))
        fd = dt - dzz - U * val(t, yv)
        assert G.residual(t, x, ("e1", yv)) == pytest.approx(fd, abs=2e-4 * (1 + abs(dt)))


def test_edge_grid_matches_pointwise():
    q = star([1.0, 1.0, 1.0], cosine=[0.4, 0.7, -0.2])
    G = GraphParametrix(q, 2)
    xs, zs = np.array([0.1, 0.3, 0.6]), np.array([0.15, 0.35, 0.5, 0.7])
    grid = EdgeGrid(G, "e1", xs, zs)
    V, R = grid.value(0.01), grid.residual(0.01)
    for i, x in enumerate(xs):
        for j, z in enumerate(zs):
            assert V[i, j] == pytest.approx(G.value(0.01, ("e1", x), ("e1", z)), abs=1e-12)
            assert R[i, j] == pytest.approx(G.residual(0.01, ("e1", x), ("e1", z)), abs=1e-10)


@pytest.mark.parametrize("k", [1, 2])
def test_residual_order(k):
    q = interval(cosine=[0.3, -0.4, 0.8, 0.25])
    G = GraphParametrix(q, k)
    ts = np.geomspace(1e-4, 1e-2, 9)
    R = [abs(G.residual(t, ("e", 1.3), ("e", 1.3))) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(R), 1)[0]
    assert slope == pytest.approx(k - 0.5, abs=0.05)


# ---------------------------------------------------------------- heat coefficients


def test_heat_coefficients_constant_potential():
    c = heat_coefficients(load_graph(FIXTURES / "interval_constant.json"))
    expected = np.array([1, 1, 1 / 2, 1 / 6])
    assert np.allclose(c.bulk, math.pi * expected, atol=1e-13)
    assert np.allclose(c.vertex_sum, 2 * expected, atol=1e-13)


@pytest.mark.parametrize("left,right,weight", [("neumann", "neumann", 0.5),
                                               ("dirichlet", "dirichlet", -0.5),
                                               ("dirichlet", "neumann", 0.0)])
def test_constant_trace_term(left, right, weight):
    c = heat_coefficients(interval(left=left, right=right))
    assert c.vertex_sum[0] / 4 == pytest.approx(weight)
    assert np.allclose(c.bulk, [math.pi, 0, 0, 0])


def test_star_vertex_weight():
    # Kirchhoff centre of degree 3: trace of sigma is 2 - 3 = -1, leaves add +1 each
    c = heat_coefficients(star([1, 1, 1]), 0)
    assert c.vertex_sum[0] == pytest.approx(2.0)


def test_heat_coefficient_csv():
    text = heat_coefficients(interval(), 2).csv()
    lines = text.strip().split("\n")
    assert lines[0] == "n,bulk_integral,vertex_sum,total_weight"
    assert len(lines) == 4 and lines[1].split(",")[3] == "0.5"


def test_boundary_series_matches_closed_form():
    for q in (interval(cosine=[0.3, -0.4, 0.8, 0.25]), star([1.2, 1.2, 1.2], cosine=[0.5, 1.0])):
        for v in q.graph.vertices:
            assert np.allclose(boundary_series(q, v),
                               boundary_coefficients(*vertex_derivatives(q, v)), atol=1e-12)


def test_vertex_integral_has_no_half_powers():
    q = interval(cosine=[0.3, -0.4, 0.8, 0.25])
    S = StarParametrix(q, "a", 3)
    fit = vertex_series_fit(S, 0)
    assert np.max(np.abs(fit[1::2])) < 1e-9
    assert np.allclose(fit[0::2], boundary_coefficients(*vertex_derivatives(q, "a")), atol=1e-9)


def test_boundary_integral_expansion():
    q = interval(cosine=[0.3, -0.4, 0.8, 0.25])
    S = StarParametrix(q, "a", 3)
    a = boundary_coefficients(*vertex_derivatives(q, "a"))
    for t in (1e-3, 3e-3):
        approx = float(np.polyval(a[::-1], t))
        assert boundary_integral(S, 0, t) == pytest.approx(approx, abs=5 * t**4 * 10)
