"""Metric graphs, vertex conditions and edge potentials.

Every edge is parametrized as ``[0, L]`` running from its ``tail`` to its
``head`` vertex.  Graphs built through :func:`build_graph` or read with
:func:`load_graph` put the lower vertex id at the tail; downstream code is
orientation-covariant, so :func:`flip_edge` may be used to test that.

A vertex condition reads ``A f(v) + B f'(v) = 0`` where the derivatives are
taken away from the vertex and the columns follow the vertex *ends* sorted by
``(edge id, side)``, ``side`` being 0 at the tail and 1 at the head.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.sparse.csgraph import shortest_path

from .errors import (
    DomainError,
    GraphFileError,
    InvalidPotentialError,
    NoninvertibleError,
    ValidationError,
)

HERMITIAN_TOL = 1e-12
NON_ROBIN_TOL = 1e-10
UNITARY_TOL = 1e-10
SMOOTHNESS_RTOL = 1e-9
NON_ROBIN_PROBES = (1.0, 2.0)


class Point(NamedTuple):
    """A point on the graph: edge id plus coordinate in ``[0, L]``."""

    edge: str
    x: float


class End(NamedTuple):
    edge: str
    side: int  # 0: x = 0 (tail), 1: x = L (head)


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float

    @property
    def is_loop(self) -> bool:
        return self.tail == self.head


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        if len(set(self.vertices)) != len(self.vertices):
            raise ValidationError("duplicate vertex ids", invariant="unique ids")
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate edge ids", invariant="unique ids")
        known = set(self.vertices)
        for e in self.edges:
            if not (math.isfinite(e.length) and e.length > 0):
                raise ValidationError(
                    f"edge {e.id!r}: length must be finite and positive, got {e.length}",
                    where=e.id,
                    invariant="positive finite length",
                )
            for v in (e.tail, e.head):
                if v not in known:
                    raise ValidationError(
                        f"edge {e.id!r}: unknown endpoint {v!r}",
                        where=e.id,
                        invariant="endpoints are vertices",
                    )

    @cached_property
    def _edge_index(self) -> dict[str, Edge]:
        return {e.id: e for e in self.edges}

    @cached_property
    def _ends(self) -> dict[str, tuple[End, ...]]:
        table: dict[str, list[End]] = {v: [] for v in self.vertices}
        for e in self.edges:
            table[e.tail].append(End(e.id, 0))
            table[e.head].append(End(e.id, 1))
        return {v: tuple(sorted(ends)) for v, ends in table.items()}

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._edge_index[edge_id]
        except KeyError:
            raise DomainError(f"unknown edge {edge_id!r}") from None

    def ends(self, vertex: str) -> tuple[End, ...]:
        return self._ends[vertex]

    def degree(self, vertex: str) -> int:
        return len(self._ends[vertex])

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    @property
    def shortest_edge(self) -> float:
        return float(min(e.length for e in self.edges))

    def has_loops_or_multi_edges(self) -> bool:
        seen = set()
        for e in self.edges:
            if e.is_loop:
                return True
            key = frozenset((e.tail, e.head))
            if key in seen:
                return True
            seen.add(key)
        return False

    @cached_property
    def vertex_distances(self) -> np.ndarray:
        n = len(self.vertices)
        pos = {v: i for i, v in enumerate(self.vertices)}
        w = np.full((n, n), np.inf)
        for e in self.edges:
            i, j = pos[e.tail], pos[e.head]
            if i != j:
                w[i, j] = w[j, i] = min(w[i, j], e.length)
        dense = np.where(np.isinf(w), 0.0, w)
        return shortest_path(dense, method="D", directed=False)

    def vertex_position(self, vertex: str) -> int:
        return self.vertices.index(vertex)


# --------------------------------------------------------------------------
# vertex conditions


def compute_sigma(A, B, k: float) -> np.ndarray:
    """Return ``-(A + ikB)^{-1} (A - ikB)``.

    Raises:
        NoninvertibleError: if ``A + ikB`` is (numerically) singular.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    M = A + 1j * k * B
    if M.size == 0 or np.linalg.cond(M) > 1e12:
        raise NoninvertibleError(
            f"A + ikB is singular at k={k}", invariant="A + ikB invertible"
        )
    return -np.linalg.solve(M, A - 1j * k * B)


def check_non_robin(A, B, k1: float = 1.0, k2: float = 2.0) -> bool:
    """True iff sigma agrees entrywise at the two probe wavenumbers."""
    s1 = compute_sigma(A, B, k1)
    s2 = compute_sigma(A, B, k2)
    return bool(np.max(np.abs(s1 - s2)) < NON_ROBIN_TOL)


def check_self_adjoint(A, B) -> bool:
    """True iff ``A B*`` is Hermitian and ``(A, B)`` has full row rank."""
    try:
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        B = np.atleast_2d(np.asarray(B, dtype=complex))
    except (TypeError, ValueError):
        return False
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        return False
    n = A.shape[0]
    AB = A @ B.conj().T
    if np.max(np.abs(AB - AB.conj().T), initial=0.0) > HERMITIAN_TOL:
        return False
    return bool(np.linalg.matrix_rank(np.hstack([A, B])) == n)


def kirchhoff_matrices(deg: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuity rows plus one row summing the outward derivatives."""
    A = np.zeros((deg, deg))
    B = np.zeros((deg, deg))
    for r in range(deg - 1):
        A[r, r] = 1.0
        A[r, r + 1] = -1.0
    B[deg - 1, :] = 1.0
    return A, B


@dataclass(frozen=True, eq=False)
class VertexCondition:
    A: np.ndarray
    B: np.ndarray
    sigma: np.ndarray = field(repr=False)
    kind: str = "matrix"

    @property
    def degree(self) -> int:
        return self.A.shape[0]

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.A.imag == 0) and np.all(self.B.imag == 0))

    @classmethod
    def from_matrices(cls, A, B, kind="matrix", where=None) -> "VertexCondition":
        """Validate ``(A, B)`` and derive sigma at ``k = 1``."""
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        B = np.atleast_2d(np.asarray(B, dtype=complex))
        label = f"vertex {where!r}: " if where is not None else ""
        if not check_self_adjoint(A, B):
            raise ValidationError(
                label + "self-adjointness check failed (AB* Hermitian, full rank)",
                where=where,
                invariant="self-adjoint",
            )
        try:
            robin_free = check_non_robin(A, B, *NON_ROBIN_PROBES)
        except NoninvertibleError as exc:
            raise NoninvertibleError(label + str(exc), where=where,
                                     invariant="A + ikB invertible") from None
        if not robin_free:
            raise ValidationError(
                label + "non-Robin check failed (sigma depends on k)",
                where=where,
                invariant="non-Robin",
            )
        sigma = compute_sigma(A, B, NON_ROBIN_PROBES[0])
        n = sigma.shape[0]
        eye = np.eye(n)
        if (np.max(np.abs(sigma @ sigma.conj().T - eye)) > UNITARY_TOL
                or np.max(np.abs(sigma @ sigma - eye)) > UNITARY_TOL):
            raise ValidationError(label + "sigma is not a unitary involution",
                                  where=where, invariant="sigma unitary, sigma^2 = I")
        for arr in (A, B, sigma):
            arr.setflags(write=False)
        return cls(A, B, sigma, kind)

    @classmethod
    def kirchhoff(cls, deg: int, where=None) -> "VertexCondition":
        return cls.from_matrices(*kirchhoff_matrices(deg), kind="kirchhoff", where=where)

    @classmethod
    def dirichlet(cls, deg: int, where=None) -> "VertexCondition":
        return cls.from_matrices(np.eye(deg), np.zeros((deg, deg)), kind="dirichlet",
                                 where=where)

    @classmethod
    def neumann(cls, deg: int, where=None) -> "VertexCondition":
        return cls.from_matrices(np.zeros((deg, deg)), np.eye(deg), kind="neumann",
                                 where=where)

    def permuted(self, order: Sequence[int]) -> "VertexCondition":
        """Condition with columns reordered: new column j is old column order[j]."""
        idx = list(order)
        A = self.A[:, idx]
        B = self.B[:, idx]
        return VertexCondition(A, B, compute_sigma(A, B, 1.0), self.kind)


def condition_from_kind(kind: str, deg: int, where=None) -> VertexCondition:
    makers = {
        "kirchhoff": VertexCondition.kirchhoff,
        "dirichlet": VertexCondition.dirichlet,
        "neumann": VertexCondition.neumann,
    }
    if kind not in makers:
        raise ValidationError(f"vertex {where!r}: unknown condition type {kind!r}",
                              where=where, invariant="known condition type")
    return makers[kind](deg, where=where)


# --------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class EdgePotential:
    """Finite cosine series ``U(x) = sum_m c_m cos(m pi (x + shift) / period)``.

    Freshly built potentials have ``period = length`` and ``shift = 0``, so all
    odd derivatives vanish at both endpoints.  Flipped or subdivided pieces keep
    the same function and only move the phase.
    """

    coefficients: tuple[float, ...]
    length: float
    period: float | None = None
    shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           tuple(float(c) for c in self.coefficients) or (0.0,))
        if self.period is None:
            object.__setattr__(self, "period", float(self.length))

    @cached_property
    def _omega(self) -> np.ndarray:
        return np.arange(len(self.coefficients)) * np.pi / self.period

    @cached_property
    def _coef(self) -> np.ndarray:
        return np.asarray(self.coefficients)

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        w = self._omega
        phase = np.multiply.outer(x + self.shift, w) + order * np.pi / 2
        return np.cos(phase) @ (self._coef * w**order)

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.coefficients[1:])

    @property
    def sup_bound(self) -> float:
        """Upper bound for ``sup |U|`` (sum of absolute coefficients)."""
        return float(np.sum(np.abs(self._coef)))

    def derivative_bound(self, order: int) -> float:
        return float(np.sum(np.abs(self._coef) * self._omega**order))

    @property
    def max_frequency(self) -> float:
        return float(self._omega[-1])

    def _nodes(self, power: int = 1):
        npanel = max(4, int(np.ceil(power * self.max_frequency * self.length / np.pi)) + 2)
        xg, wg = np.polynomial.legendre.leggauss(16)
        edges = np.linspace(0.0, self.length, npanel + 1)
        h = np.diff(edges)
        x = (edges[:-1, None] + (xg[None, :] + 1) * h[:, None] / 2).ravel()
        w = (wg[None, :] * h[:, None] / 2).ravel()
        return x, w

    def integral(self) -> float:
        x, w = self._nodes()
        return float(w @ self(x))

    def l1_norm(self) -> float:
        """Integral of ``|U|``, split at the sign changes of ``U``."""
        grid = np.linspace(0.0, self.length, 64 * (2 + int(self.max_frequency * self.length)))
        vals = self(grid)
        cuts = [0.0]
        for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
            cuts.append(brentq(self, grid[i], grid[i + 1], xtol=1e-15))
        cuts.append(self.length)
        xg, wg = np.polynomial.legendre.leggauss(32)
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            x = a + (xg + 1) * (b - a) / 2
            total += abs(wg @ self(x)) * (b - a) / 2
        return float(total)

    def l2_norm(self) -> float:
        x, w = self._nodes(2)
        return float(np.sqrt(w @ self(x) ** 2))

    def flipped(self) -> "EdgePotential":
        """The same function in the reversed coordinate ``s = L - x``."""
        return EdgePotential(self.coefficients, self.length, self.period,
                             -(self.length + self.shift))

    def piece(self, a: float, b: float) -> "EdgePotential":
        """Restriction to ``[a, b]`` re-parametrized to ``[0, b - a]``."""
        return EdgePotential(self.coefficients, b - a, self.period, self.shift + a)


def zero_potential(length: float) -> EdgePotential:
    return EdgePotential((0.0,), length)


# --------------------------------------------------------------------------
# quantum graph


@dataclass(frozen=True, eq=False)
class QuantumGraph:
    graph: MetricGraph
    conditions: Mapping[str, VertexCondition]
    potentials: Mapping[str, EdgePotential]

    def __post_init__(self):
        object.__setattr__(self, "conditions", MappingProxyType(dict(self.conditions)))
        object.__setattr__(self, "potentials", MappingProxyType(dict(self.potentials)))
        for v in self.graph.vertices:
            cond = self.conditions.get(v)
            if cond is None:
                raise ValidationError(f"vertex {v!r}: no boundary condition", where=v,
                                      invariant="condition present")
            if cond.degree != self.graph.degree(v):
                raise ValidationError(
                    f"vertex {v!r}: condition has size {cond.degree} but degree is "
                    f"{self.graph.degree(v)}", where=v, invariant="matrix size = degree")
        for e in self.graph.edges:
            pot = self.potentials.get(e.id)
            if pot is None:
                raise ValidationError(f"edge {e.id!r}: no potential", where=e.id,
                                      invariant="potential present")
            if abs(pot.length - e.length) > 1e-12 * e.length:
                raise ValidationError(f"edge {e.id!r}: potential length mismatch",
                                      where=e.id, invariant="potential length = edge length")

    @property
    def total_length(self) -> float:
        return self.graph.total_length

    @property
    def n_edges(self) -> int:
        return len(self.graph.edges)

    @property
    def potential_sup(self) -> float:
        return max(p.sup_bound for p in self.potentials.values())

    @property
    def is_real(self) -> bool:
        return all(c.is_real for c in self.conditions.values())

    def local_derivative(self, vertex: str, end: End, order: int) -> float:
        """``U^(order)`` at ``vertex`` in the coordinate pointing into the edge."""
        pot = self.potentials[end.edge]
        if end.side == 0:
            return float(pot(0.0, order))
        return float((-1) ** order * pot(pot.length, order))

    def vertex_value(self, vertex: str, order: int = 0) -> float:
        """Even-order derivative of U at a vertex (first adjacent edge)."""
        ends = self.graph.ends(vertex)
        if not ends:
            return 0.0
        return self.local_derivative(vertex, ends[0], order)

    def smoothness_violations(self, max_order: int = 4,
                              rtol: float = SMOOTHNESS_RTOL) -> list[str]:
        out = []
        for v in self.graph.vertices:
            ends = self.graph.ends(v)
            for n in range(max_order + 1):
                vals = [self.local_derivative(v, end, n) for end in ends]
                scale = max([1.0] + [self.potentials[e.edge].derivative_bound(n) for e in ends])
                if n % 2:
                    bad = [e.edge for e, val in zip(ends, vals) if abs(val) > rtol * scale]
                    if bad:
                        out.append(f"vertex {v!r}: odd derivative U^({n}) nonzero on {bad}")
                elif vals and max(vals) - min(vals) > rtol * max(1.0, *map(abs, vals)):
                    out.append(f"vertex {v!r}: U^({n}) differs across adjacent edges")
        return out

    def require_smooth(self, max_order: int = 4) -> None:
        problems = self.smoothness_violations(max_order)
        if problems:
            raise InvalidPotentialError("; ".join(problems),
                                        invariant="vertex smoothness")

    def sigma_diagonal(self, vertex: str) -> np.ndarray:
        return np.real_if_close(np.diag(self.conditions[vertex].sigma))


def eval_potential(q: QuantumGraph, edge: str, x, order: int = 0):
    """Closed-form ``U^(order)(x)`` on ``edge``; ``x`` must lie in ``[0, L]``."""
    pot = q.potentials.get(edge)
    if pot is None:
        raise DomainError(f"unknown edge {edge!r}")
    if not 0 <= order <= 4:
        raise DomainError(f"derivative order {order} outside 0..4")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > pot.length):
        raise DomainError(f"x={x} outside [0, {pot.length}] on edge {edge!r}")
    out = pot(xa, order)
    return float(out) if np.ndim(out) == 0 else out


def _check_point(g: MetricGraph, p: Point) -> Edge:
    e = g.edge(p.edge)
    if not 0.0 <= p.x <= e.length:
        raise DomainError(f"point {p} outside edge {p.edge!r} of length {e.length}")
    return e


def graph_metric(q, x: Point, y: Point) -> float:
    """Shortest-path distance between two points of the graph."""
    g = q.graph if isinstance(q, QuantumGraph) else q
    ex, ey = _check_point(g, Point(*x)), _check_point(g, Point(*y))
    D = g.vertex_distances
    best = np.inf
    if ex.id == ey.id:
        best = abs(x[1] - y[1])
    for vx, dx in ((ex.tail, x[1]), (ex.head, ex.length - x[1])):
        i = g.vertex_position(vx)
        for vy, dy in ((ey.tail, y[1]), (ey.head, ey.length - y[1])):
            best = min(best, dx + D[i, g.vertex_position(vy)] + dy)
    return float(best)


def shortest_edge(q) -> float:
    g = q.graph if isinstance(q, QuantumGraph) else q
    return g.shortest_edge


# --------------------------------------------------------------------------
# restructuring


def _remap(q: QuantumGraph, edges: list[Edge], potentials: dict[str, EdgePotential],
           end_map: dict[tuple[str, End], End], new_vertices: Iterable[str]) -> QuantumGraph:
    """Rebuild ``q`` on new edges; ``end_map`` sends (vertex, old end) to new end."""
    vertices = list(q.graph.vertices) + list(new_vertices)
    g = MetricGraph(tuple(vertices), tuple(edges))
    conditions = {}
    for v in q.graph.vertices:
        old_ends = q.graph.ends(v)
        mapped = [end_map.get((v, end), end) for end in old_ends]
        new_ends = g.ends(v)
        order = [mapped.index(end) for end in new_ends]
        cond = q.conditions[v]
        conditions[v] = cond if order == list(range(len(order))) else cond.permuted(order)
    for v in new_vertices:
        conditions[v] = VertexCondition.kirchhoff(g.degree(v))
    return QuantumGraph(g, conditions, potentials)


def _split(q_edges, q_pots, e: Edge, tag: str, end_map, new_vertices, taken):
    mid = f"{e.id}~{tag}"
    while mid in taken:
        mid += "'"
    taken.add(mid)
    new_vertices.append(mid)
    half = e.length / 2
    a, b = Edge(f"{e.id}~a", e.tail, mid, half), Edge(f"{e.id}~b", mid, e.head, half)
    pot = q_pots.pop(e.id)
    q_pots[a.id] = pot.piece(0.0, half)
    q_pots[b.id] = pot.piece(half, e.length)
    end_map[(e.tail, End(e.id, 0))] = End(a.id, 0)
    end_map[(e.head, End(e.id, 1))] = End(b.id, 1)
    return [a, b]


def split_loops(q: QuantumGraph) -> QuantumGraph:
    """Insert a Kirchhoff-Neumann vertex at the midpoint of every loop."""
    edges, pots, end_map, new_vertices = [], dict(q.potentials), {}, []
    taken = set(q.graph.vertices)
    for e in q.graph.edges:
        if e.is_loop:
            edges += _split(edges, pots, e, "mid", end_map, new_vertices, taken)
        else:
            edges.append(e)
    if not new_vertices:
        return q
    return _remap(q, edges, pots, end_map, new_vertices)


def split_multi_edges(q: QuantumGraph) -> QuantumGraph:
    """Subdivide all but one edge of every bundle of parallel edges."""
    edges, pots, end_map, new_vertices = [], dict(q.potentials), {}, []
    taken = set(q.graph.vertices)
    seen = set()
    for e in sorted(q.graph.edges, key=lambda e: e.id):
        key = frozenset((e.tail, e.head))
        if key in seen:
            edges += _split(edges, pots, e, "mid", end_map, new_vertices, taken)
        else:
            seen.add(key)
            edges.append(e)
    if not new_vertices:
        return q
    return _remap(q, edges, pots, end_map, new_vertices)


def subdivide(q):
    """Remove loops and multiple edges by inserting degree-2 Kirchhoff vertices.

    Accepts a :class:`QuantumGraph` (potentials are split with the edges) or a
    bare :class:`MetricGraph` (Kirchhoff-Neumann conditions everywhere).
    """
    if isinstance(q, MetricGraph):
        qg = QuantumGraph(q, {v: VertexCondition.kirchhoff(q.degree(v)) for v in q.vertices},
                          {e.id: zero_potential(e.length) for e in q.edges})
        return subdivide(qg).graph
    out = orient(split_multi_edges(split_loops(q)))
    assert not out.graph.has_loops_or_multi_edges()
    return out


def flip_edge(q: QuantumGraph, edge_id: str) -> QuantumGraph:
    """Reverse the parametrization of one edge; the operator is unchanged."""
    e = q.graph.edge(edge_id)
    flipped = Edge(e.id, e.head, e.tail, e.length)
    edges = [flipped if f.id == edge_id else f for f in q.graph.edges]
    pots = dict(q.potentials)
    pots[edge_id] = q.potentials[edge_id].flipped()
    end_map = {(e.tail, End(e.id, 0)): End(e.id, 1), (e.head, End(e.id, 1)): End(e.id, 0)}
    if e.is_loop:
        # both ends sit at the same vertex; the map above would collide
        end_map = {(e.tail, End(e.id, 0)): End(e.id, 1), (e.tail, End(e.id, 1)): End(e.id, 0)}
    return _remap(q, edges, pots, end_map, [])


def orient(q: QuantumGraph) -> QuantumGraph:
    """Apply the lower-id-at-tail convention to every edge."""
    for e in q.graph.edges:
        if not e.is_loop and e.tail > e.head:
            q = flip_edge(q, e.id)
    return q


# --------------------------------------------------------------------------
# construction and file format


def build_graph(vertices: Mapping[str, object], edges: Sequence[Mapping]) -> QuantumGraph:
    """Build a graph from plain data.

    ``vertices`` maps vertex id to a condition: a kind string
    (``"kirchhoff"``, ``"dirichlet"``, ``"neumann"``), a ``(A, B)`` pair, or a
    ready :class:`VertexCondition`.  Each edge is a mapping with ``id``,
    ``from``, ``to``, ``length`` and optional ``cosine`` coefficients, the
    potential being expressed in the ``from -> to`` coordinate.
    """
    elist, pots = [], {}
    for spec in edges:
        eid = str(spec["id"])
        e = Edge(eid, str(spec["from"]), str(spec["to"]), float(spec["length"]))
        elist.append(e)
        pots[eid] = EdgePotential(tuple(spec.get("cosine", (0.0,))), e.length)
    g = MetricGraph(tuple(str(v) for v in vertices), tuple(elist))
    conditions = {}
    for v, bc in vertices.items():
        v = str(v)
        if isinstance(bc, VertexCondition):
            conditions[v] = bc
        elif isinstance(bc, str):
            conditions[v] = condition_from_kind(bc, g.degree(v), where=v)
        else:
            A, B = bc
            conditions[v] = VertexCondition.from_matrices(A, B, where=v)
    return orient(QuantumGraph(g, conditions, pots))


def interval(length: float = np.pi, left="neumann", right="neumann",
             cosine: Sequence[float] = (0.0,)) -> QuantumGraph:
    return build_graph({"a": left, "b": right},
                       [{"id": "e", "from": "a", "to": "b", "length": length,
                         "cosine": cosine}])


def star(lengths: Sequence[float] = (1.0, 1.0, 1.0), center="kirchhoff", leaves="neumann",
         cosine: Sequence[float] = (0.0,)) -> QuantumGraph:
    verts = {"c": center}
    edges = []
    for i, L in enumerate(lengths):
        verts[f"l{i}"] = leaves
        edges.append({"id": f"e{i}", "from": "c", "to": f"l{i}", "length": L,
                      "cosine": cosine})
    return build_graph(verts, edges)


def _complex_matrix(rows, where, name):
    try:
        return np.array([[complex(re, im) for re, im in row] for row in rows])
    except (TypeError, ValueError):
        raise GraphFileError(f"vertex {where!r}: matrix {name} must be rows of [re, im] pairs")


def parse_graph(doc: Mapping) -> QuantumGraph:
    """Build a graph from the decoded JSON description."""
    if not isinstance(doc, Mapping) or "vertices" not in doc or "edges" not in doc:
        raise GraphFileError("top level must be an object with 'vertices' and 'edges'")
    edges = []
    for i, spec in enumerate(doc["edges"]):
        eid = spec.get("id", f"#{i}")
        for key in ("id", "from", "to", "length"):
            if key not in spec:
                raise GraphFileError(f"edge {eid!r}: missing {key!r}")
        pot = spec.get("potential", {"cosine": [0.0]})
        if "cosine" not in pot:
            raise GraphFileError(f"edge {eid!r}: potential must be {{'cosine': [...]}}")
        try:
            length = float(spec["length"])
        except (TypeError, ValueError):
            raise GraphFileError(f"edge {eid!r}: length is not a number") from None
        edges.append({"id": spec["id"], "from": spec["from"], "to": spec["to"],
                      "length": length, "cosine": pot["cosine"]})
    vertices = {}
    for spec in doc["vertices"]:
        if "id" not in spec:
            raise GraphFileError("vertex without 'id'")
        vid = str(spec["id"])
        bc = spec.get("bc", {"type": "kirchhoff"})
        kind = bc.get("type")
        if kind == "matrix":
            vertices[vid] = (_complex_matrix(bc.get("A", []), vid, "A"),
                             _complex_matrix(bc.get("B", []), vid, "B"))
        else:
            vertices[vid] = kind
    return build_graph(vertices, edges)


def load_graph(path) -> QuantumGraph:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise GraphFileError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFileError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None
    return parse_graph(doc)
