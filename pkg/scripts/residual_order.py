"""Decay of the parametrix residual on the diagonal for orders k = 1..3."""

import argparse
from dataclasses import dataclass

import numpy as np

from qgheat.graph_model import load_graph, subdivide
from qgheat.heat_engine import fit_slope


@dataclass
class Config:
    graph: str = "fixtures/interval_cosine.json"
    t_min: float = 1e-4
    t_max: float = 1e-2
    points: int = 9
    probes_per_edge: int = 4
    max_order: int = 3


def main(cfg: Config) -> None:
    from qgheat.parametrix import GraphParametrix

    q = load_graph(cfg.graph)
    if q.graph.has_loops_or_multi_edges():
        q = subdivide(q)
    probes = [(e.id, float(x)) for e in q.graph.edges
              for x in np.linspace(0.1, 0.9, cfg.probes_per_edge) * e.length]
    ts = np.geomspace(cfg.t_min, cfg.t_max, cfg.points)
    for k in range(1, cfg.max_order + 1):
        G = GraphParametrix(q, k)
        R = [max(abs(G.residual(t, p, p)) for p in probes) for t in ts]
        slope, _ = fit_slope(ts, R)
        print(f"k={k}: slope {slope:.3f} (expected {k - 0.5}), max residual {max(R):.3e}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    for name, val in vars(Config()).items():
        p.add_argument(f"--{name.replace('_', '-')}", type=type(val), default=val)
    main(Config(**vars(p.parse_args())))
