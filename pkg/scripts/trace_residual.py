"""Spectral trace minus the n<=3 expansion, with global and local log-log slopes."""

import argparse
from dataclasses import dataclass

import numpy as np

from qgheat.graph_model import load_graph
from qgheat.heat_engine import compare_trace, per_decade
from qgheat.spectrum import find_eigenvalues, required_lambda_max


@dataclass
class Config:
    graph: str = "fixtures/interval_cosine.json"
    t_min: float = 0.01
    t_max: float = 0.1
    per_decade: int = 12
    tol: float = 1e-12


def main(cfg: Config) -> None:
    q = load_graph(cfg.graph)
    t = per_decade(cfg.t_min, cfg.t_max, cfg.per_decade)
    lam = required_lambda_max(q, cfg.t_min, cfg.tol)
    cmp_ = compare_trace(q, t, resolution=find_eigenvalues(q, lam), tol=cfg.tol)
    local = np.gradient(np.log(np.abs(cmp_.residual)), np.log(cmp_.t))
    print(f"eigenvalues up to {lam:.4g}; fitted slope {cmp_.slope:.4f}")
    print(f"{'t':>10s} {'residual':>14s} {'local slope':>12s}")
    for ti, r, s in zip(cmp_.t, cmp_.residual, local):
        print(f"{ti:10.4g} {r:14.6e} {s:12.4f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    for name, val in vars(Config()).items():
        p.add_argument(f"--{name.replace('_', '-')}", type=type(val), default=val)
    main(Config(**vars(p.parse_args())))
