"""Levi partial sums against the spectral heat kernel at one point pair."""

import argparse
from dataclasses import dataclass

from qgheat.graph_model import load_graph
from qgheat.heat_engine import levi_correction
from qgheat.spectrum import spectral_heat_kernel, spectral_resolution


@dataclass
class Config:
    graph: str = "fixtures/interval_cosine.json"
    edge: str = "e"
    x: float = 1.5
    y: float = 1.6
    t: float = 0.01
    k: int = 1
    l_max: int = 2
    lambda_max: float = 6000.0


def main(cfg: Config) -> None:
    q = load_graph(cfg.graph)
    x, y = (cfg.edge, cfg.x), (cfg.edge, cfg.y)
    exact = spectral_heat_kernel(q, spectral_resolution(q, cfg.lambda_max), cfg.t, x, y)
    res = levi_correction(q, cfg.k, cfg.l_max, cfg.t, x, y)
    print(f"spectral kernel {exact.value:.15g} (tail bound {exact.tail_bound:.1e})")
    print(f"l=0  {res.uncorrected:.15g}  error {abs(res.uncorrected - exact.value):.2e}")
    for l, (s, term, env) in enumerate(zip(res.partial_sums, res.terms, res.envelope), 1):
        print(f"l={l}  {s:.15g}  error {abs(s - exact.value):.2e}  "
              f"|term| {abs(term):.2e} <= envelope {env:.2e}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    for name, val in vars(Config()).items():
        p.add_argument(f"--{name.replace('_', '-')}", type=type(val), default=val)
    main(Config(**vars(p.parse_args())))
