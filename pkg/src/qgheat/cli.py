"""Command-line front end: ``qgheat {spectrum,trace,coeffs,fit,verify}``."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass

import numpy as np

from .errors import (
    GraphFileError,
    IncompleteSpectrumError,
    InsufficientSpectrumError,
    QGHeatError,
    ValidationError,
)
from .graph_model import QuantumGraph, load_graph, subdivide
from .heat_engine import compare_trace, fit_invariants, fit_slope, log_grid, per_decade
from .parametrix import (
    GraphParametrix,
    boundary_coefficients,
    boundary_series,
    heat_coefficients,
    vertex_derivatives,
)
from .spectrum import (
    find_eigenvalues,
    required_lambda_max,
    spectral_heat_trace,
    spectral_resolution,
    spectrum_csv,
    weyl_check,
)

EXIT_OK, EXIT_FILE, EXIT_INVALID, EXIT_INCOMPLETE, EXIT_VERIFY = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    command: str
    graph: str
    lambda_max: float = 400.0
    t: tuple[float, ...] = ()
    order: int = 3
    tol: float = 1e-8
    output: str | None = None
    seed: int = 0
    noise: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.lambda_max):
            raise ValueError("lambda-max must be finite")
        if any(not t > 0 for t in self.t):
            raise ValueError("t values must be positive")
        if not 0 <= self.order <= 3:
            raise ValueError("order must be between 0 and 3")


def parse_t_grid(text: str) -> tuple[float, ...]:
    """``a:b:n`` with an optional ``log`` suffix; points are log-spaced."""
    parts = text.strip().removesuffix("log").removesuffix(":").split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("t-grid must look like a:b:n")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    return tuple(float(v) for v in log_grid(a, b, n))


def _emit(cfg: RunConfig, csv: str) -> None:
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv)
    else:
        sys.stdout.write(csv)


def _say(msg: str) -> None:
    print(msg)


def cmd_spectrum(cfg: RunConfig, q: QuantumGraph) -> int:
    res = find_eigenvalues(q, cfg.lambda_max)
    if cfg.output:
        _say(f"{len(res)} eigenvalues up to {cfg.lambda_max:g} "
             f"({res.roots.size} distinct)")
    _emit(cfg, spectrum_csv(res))
    return EXIT_OK


def _t_values(cfg: RunConfig, default=(0.01, 0.1, 13)) -> np.ndarray:
    return np.array(cfg.t) if cfg.t else log_grid(*default)


def cmd_trace(cfg: RunConfig, q: QuantumGraph) -> int:
    t = _t_values(cfg)
    lam = max(cfg.lambda_max, required_lambda_max(q, float(t.min()), cfg.tol))
    res = find_eigenvalues(q, lam)
    cmp_ = compare_trace(q, t, n_max=cfg.order, resolution=res, tol=cfg.tol)
    if cfg.output:
        _say(f"spectrum to {lam:.6g}: {len(res)} eigenvalues; residual slope {cmp_.slope:.4f}")
    _emit(cfg, cmp_.csv())
    return EXIT_OK


def cmd_coeffs(cfg: RunConfig, q: QuantumGraph) -> int:
    c = heat_coefficients(q, cfg.order)
    if cfg.output:
        _say(f"heat coefficients n <= {cfg.order} for {q.n_edges} edges")
    _emit(cfg, c.csv())
    return EXIT_OK


def cmd_fit(cfg: RunConfig, q: QuantumGraph) -> int:
    t = _t_values(cfg, (1e-3, 1e-1, 25))
    lam = max(cfg.lambda_max, required_lambda_max(q, float(t.min()), cfg.tol))
    res = find_eigenvalues(q, lam)
    T = np.array([spectral_heat_trace(q, res, float(s), cfg.tol).value for s in t])
    if cfg.noise:
        T = T * (1 + cfg.noise * np.random.default_rng(cfg.seed).standard_normal(T.size))
    fit = fit_invariants(t, T)
    coeffs = heat_coefficients(q, 1)
    truth = {"length": q.total_length, "potential_integral": coeffs.bulk[1],
             "vertex_weight": coeffs.vertex_sum[0],
             "vertex_potential_weight": coeffs.vertex_sum[1]}
    for name, (est, err) in fit.estimates.items() if cfg.output else ():
        _say(f"{name:>24s} = {est:.10g} +- {err:.2g}  (exact {truth[name]:.10g})")
    _emit(cfg, fit.csv())
    return EXIT_OK


def verify_checks(q: QuantumGraph, lambda_max: float, seed: int = 0):
    """Yield ``(name, passed, detail)`` for every invariant checked by ``verify``."""
    res = spectral_resolution(q, lambda_max)
    K = math.sqrt(lambda_max)
    w = weyl_check(res, 0.0, K)
    yield "weyl", w.passed, f"count {w.count} vs {w.prediction:.3f} +- {w.slack:g}"
    dev = float(np.max(np.abs(res.gram() - np.eye(len(res))), initial=0.0))
    yield "orthonormality", dev < 1e-8, f"max |G - I| = {dev:.2e}"
    smooth = not q.smoothness_violations(4)
    if not smooth:
        yield "smoothness", False, "; ".join(q.smoothness_violations(4))
        return
    c = heat_coefficients(q, 3)
    dl = abs(c.bulk[0] - q.total_length)
    yield "bulk a0 = length", dl < 1e-10, f"deviation {dl:.2e}"
    worst = 0.0
    for v in q.graph.vertices:
        worst = max(worst, float(np.max(np.abs(
            boundary_series(q, v) - boundary_coefficients(*vertex_derivatives(q, v))))))
    yield "boundary coefficients", worst < 1e-8, f"max deviation {worst:.2e}"
    t = per_decade(0.01, 0.1)
    need = required_lambda_max(q, 0.01, 1e-12)
    cmp_ = compare_trace(q, t, resolution=find_eigenvalues(q, need), tol=1e-12,
                         coefficients=c)
    small = float(np.max(np.abs(cmp_.residual)))
    ok = small < 1e-8 or cmp_.slope >= 3.3
    yield "trace expansion", ok, f"max residual {small:.2e}, slope {cmp_.slope:.3f}"
    g = subdivide(q) if q.graph.has_loops_or_multi_edges() else q
    rng = np.random.default_rng(seed)
    ts = per_decade(1e-4, 1e-2, 4)
    for k in (1, 2):
        G = GraphParametrix(g, k)
        probes = []
        for e in g.graph.edges:
            xs = e.length * rng.uniform(0.2, 0.8, 2)
            probes += [(e.id, float(x)) for x in xs]
        R = [max(abs(G.residual(s, p, p)) for p in probes) for s in ts]
        slope, _ = fit_slope(ts, R)
        peak = max(R)
        ok = peak < 1e-9 or slope >= k - 0.6
        yield f"residual order k={k}", ok, f"slope {slope:.3f}, max {peak:.2e}"


def cmd_verify(cfg: RunConfig, q: QuantumGraph) -> int:
    lam = min(cfg.lambda_max, 400.0)
    for name, ok, detail in verify_checks(q, lam, cfg.seed):
        _say(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        if not ok:
            _say(f"first failure: {name}")
            return EXIT_VERIFY
    _say("all invariants passed")
    return EXIT_OK


COMMANDS = {"spectrum": cmd_spectrum, "trace": cmd_trace, "coeffs": cmd_coeffs,
            "fit": cmd_fit, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgheat", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--graph", required=True, help="graph description (JSON)")
    p.add_argument("--lambda-max", type=float, default=400.0)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--t", type=float, action="append", help="time value (repeatable)")
    grp.add_argument("--t-grid", type=parse_t_grid, help="log-spaced grid a:b:n")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--output", help="CSV destination (default: stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0,
                   help="relative Gaussian noise added to fit samples")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args.command, args.graph, args.lambda_max,
                        tuple(args.t or args.t_grid or ()), args.order, args.tol,
                        args.output, args.seed, args.noise)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        q = load_graph(cfg.graph)
        return COMMANDS[cfg.command](cfg, q)
    except GraphFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except (IncompleteSpectrumError, InsufficientSpectrumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (ValidationError, QGHeatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
