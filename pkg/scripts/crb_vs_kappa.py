"""Spectral estimator error against the curvature-corrected bound on a complete graph.

Scaled-down version of the kappa sweep with outliers: N nodes, one anchor,
Langevin noise with inlier probability p, n = 3.
"""

import argparse
from dataclasses import dataclass, field

from rotsync.noise import NoiseModel
from rotsync.sync import ExperimentConfig, random_graph, rows_to_csv, sweep


@dataclass
class SweepSettings:
    nodes: int = 100
    p: float = 0.7
    kappas: tuple = (2.0, 4.0, 8.0, 16.0)
    trials: int = 50
    seed: int = 0
    output: str = ""
    experiment: ExperimentConfig = field(default=None)

    def __post_init__(self):
        if self.experiment is None:
            self.experiment = ExperimentConfig(trials=self.trials, seed=self.seed, anchored=True, corrected=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=100)
    ap.add_argument("--p", type=float, default=0.7)
    ap.add_argument("--kappas", default="2,4,8,16")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-o", "--output", default="")
    a = ap.parse_args()
    cfg = SweepSettings(a.nodes, a.p, tuple(float(k) for k in a.kappas.split(",")), a.trials, a.seed, a.output)

    def make_graph(kappa):
        return random_graph("complete", cfg.nodes, NoiseModel.langevin_outlier(3, kappa, cfg.p), anchors=(0,))

    text = rows_to_csv(sweep(make_graph, cfg.kappas, "kappa", cfg.experiment))
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")


if __name__ == "__main__":
    main()
