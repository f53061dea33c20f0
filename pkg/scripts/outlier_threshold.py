"""Inlier probability needed for RMS accuracy eps on an Erdos-Renyi graph (n = 3).

Prints the quick estimate from N and M alone next to the exact requirement
from tr(L^+) of the sampled graph, plus w(p) / (a p^2) at both answers to show
how far the small-p expansion is from the exact weight there.
"""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from rotsync.crb import outlier_threshold, required_inlier_probability
from rotsync.graphcore import laplacian_from_weights, spectral_kernel, trace_pinv
from rotsync.noise import NoiseModel, info_weight, outlier_slope
from rotsync.sync import random_graph


@dataclass
class Scenario:
    nodes: int = 2500
    density: float = 0.6
    kappa: float = 7.0
    eps: float = 0.1
    seed: int = 0


def run(s: Scenario) -> dict:
    g = random_graph("erdos_renyi", s.nodes, NoiseModel.langevin_outlier(3, s.kappa, 0.5), s.seed, q=s.density)
    L = laplacian_from_weights(s.nodes, np.array(g.pairs), np.ones(g.M))
    unit_trace = trace_pinv(spectral_kernel(L))
    a = outlier_slope(3, s.kappa)
    p_formula = outlier_threshold(3, s.kappa, s.eps, s.nodes, g.M)
    p_trace = required_inlier_probability(unit_trace, s.nodes, 3, s.kappa, s.eps)

    def expansion_ratio(p):
        return info_weight(NoiseModel.langevin_outlier(3, s.kappa, p)) / (a * p * p)

    return {
        **asdict(s),
        "edges": g.M,
        "unit_trace": unit_trace,
        "slope_a": a,
        "p_formula": p_formula,
        "p_trace": p_trace,
        "w_over_ap2_at_p_formula": expansion_ratio(p_formula),
        "w_over_ap2_at_p_trace": expansion_ratio(p_trace),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for name, val in asdict(Scenario()).items():
        ap.add_argument(f"--{name}", type=type(val), default=val)
    print(json.dumps(run(Scenario(**vars(ap.parse_args()))), indent=2))


if __name__ == "__main__":
    main()
