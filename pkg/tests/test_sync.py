import json
import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from rotsync.crb import baseline_variance, crb_anchorfree
from rotsync.errors import GraphError
from rotsync.graphcore import MeasurementGraph
from rotsync.noise import NoiseModel, sample_uniform
from rotsync.songeom import align_quotient, is_rotation, planar_rotation, skew, vee3
from rotsync.sync import (
    ExperimentConfig,
    ProblemInstance,
    eig_sync,
    evaluate,
    random_graph,
    rows_to_csv,
    run_experiment,
    run_trial,
    synthesize,
)


def complete(N, model, anchors=()):
    return random_graph("complete", N, model, anchors=anchors)


# --------------------------------------------------------------------------
# Synthesis


def test_noiseless_measurements_are_exact(rng):
    g = complete(5, NoiseModel.langevin(3, 2.0))
    inst = synthesize(g, "random", 3, noiseless=True)
    for k, (i, j, _) in enumerate(g.edges):
        assert np.allclose(inst.measurements[k], inst.truth[i] @ inst.truth[j].T, atol=1e-15)


def test_synthesis_is_deterministic():
    g = random_graph("erdos_renyi", 12, NoiseModel.langevin_outlier(3, 5.0, 0.6), seed=1, q=0.5)
    a, b = synthesize(g, "random", 42), synthesize(g, "random", 42)
    assert np.array_equal(a.truth, b.truth) and np.array_equal(a.measurements, b.measurements)
    assert not np.array_equal(a.measurements, synthesize(g, "random", 43).measurements)
    assert all(is_rotation(H, tol=1e-10) for H in a.measurements)


def test_synthesis_given_truth(rng):
    g = complete(3, NoiseModel.langevin(2, 1.0))
    R = sample_uniform(2, rng, size=3)
    assert np.array_equal(synthesize(g, R, 0).truth, R)
    with pytest.raises(Exception):
        synthesize(g, R[:2], 0)


def test_measurement_residual_distribution():
    kappa = 1.5
    g = MeasurementGraph(2, ((0, 1, NoiseModel.langevin(2, kappa)),), (), 2)
    angles = []
    for t in range(10000):
        inst = synthesize(g, "random", (9, t))
        R = inst.truth
        Z = inst.measurements[0] @ R[1] @ R[0].T
        angles.append(math.atan2(Z[1, 0], Z[0, 0]))
    # the angle of Z has density exp(2 kappa cos t) / (2 pi I0(2 kappa))
    grid = np.linspace(-np.pi, np.pi, 4001)
    cdf = scipy.integrate.cumulative_trapezoid(np.exp(2 * kappa * np.cos(grid)), grid, initial=0)
    cdf /= cdf[-1]
    assert scipy.stats.kstest(angles, lambda x: np.interp(x, grid, cdf)).pvalue > 1e-3


# --------------------------------------------------------------------------
# Estimator


@pytest.mark.parametrize("n", [2, 3, 4])
def test_eig_noiseless_recovers_truth(n):
    g = random_graph("erdos_renyi", 15, NoiseModel.langevin(n, 1.0), seed=2, q=0.5)
    inst = synthesize(g, "random", 5, noiseless=True)
    est = eig_sync(inst)
    assert all(is_rotation(R, tol=1e-10) for R in est)
    _, dist = align_quotient(inst.truth, est)
    assert dist < 1e-6


def test_eig_anchored_overwrites_anchors():
    g = complete(8, NoiseModel.langevin(3, 5.0), anchors=(0, 3))
    inst = synthesize(g, "random", 11)
    est = eig_sync(inst, anchored=True)
    assert np.array_equal(est[[0, 3]], inst.truth[[0, 3]])
    noiseless = synthesize(g, "random", 11, noiseless=True)
    est = eig_sync(noiseless, anchored=True)
    assert np.allclose(est, noiseless.truth, atol=1e-8)


def test_eig_uniform_noise_matches_baseline():
    g = complete(30, NoiseModel.uniform(3), anchors=(0,))
    totals = [run_trial(g, ExperimentConfig(trials=1, seed=4, anchored=True), t).node_errors[1:] for t in range(60)]
    errs = np.concatenate(totals)
    se = errs.std(ddof=1) / math.sqrt(len(errs))
    assert abs(errs.mean() - baseline_variance(3)) < 4 * se


def test_eig_near_crb_k50():
    g = complete(50, NoiseModel.langevin(2, 5.0))
    res = run_experiment(g, ExperimentConfig(trials=60, seed=3))
    assert res.emp_total >= res.crb.total - 2 * res.emp_stderr
    assert res.emp_total <= 3 * res.crb.total


def test_eig_error_is_symmetric():
    """Tangent coordinates of the per-node error have zero skewness (unbiasedness proxy)."""
    g = complete(20, NoiseModel.langevin(3, 4.0), anchors=(0,))
    coords = []
    for t in range(150):
        inst = synthesize(g, "random", (21, t))
        est = eig_sync(inst, anchored=True)
        E = np.swapaxes(inst.truth, 1, 2) @ est
        coords.append(vee3(skew(E[1:])))
    X = np.concatenate(coords)
    for c in range(3):
        x = X[:, c]
        sk = scipy.stats.skew(x)
        assert abs(sk) < 4 * math.sqrt(6 / len(x))


# --------------------------------------------------------------------------
# Evaluation


def test_evaluate_truth_is_zero(rng):
    g = complete(5, NoiseModel.langevin(3, 1.0), anchors=(0,))
    inst = synthesize(g, "random", 1)
    for anchored in (True, False):
        r = evaluate(inst, inst.truth, anchored, pairs=[(0, 1)])
        assert np.allclose(r.node_errors, 0, atol=1e-14) and np.allclose(r.pair_errors, 0, atol=1e-14)


def test_evaluate_single_node_angle():
    g = complete(3, NoiseModel.langevin(2, 1.0), anchors=(0,))
    truth = planar_rotation(np.array([0.1, 0.5, -1.0]))
    inst = ProblemInstance(g, truth, np.zeros((3, 2, 2)))
    est = truth.copy()
    theta = 0.3
    est[2] = truth[2] @ planar_rotation(theta)
    r = evaluate(inst, est, anchored=True)
    assert r.node_errors == pytest.approx([0, 0, 2 * theta**2], abs=1e-14)


def test_pair_errors_are_gauge_invariant(rng):
    g = complete(6, NoiseModel.langevin(3, 3.0))
    inst = synthesize(g, "random", 8)
    est = eig_sync(inst)
    pairs = [(0, 1), (2, 5), (3, 4)]
    a = evaluate(inst, est, pairs=pairs).pair_errors
    b = evaluate(inst, est @ sample_uniform(3, rng), pairs=pairs).pair_errors
    assert np.allclose(a, b, atol=1e-10)


def test_evaluate_saturation_flag():
    g = complete(2, NoiseModel.langevin(2, 1.0), anchors=(0,))
    truth = np.stack([np.eye(2), np.eye(2)])
    inst = ProblemInstance(g, truth, np.zeros((1, 2, 2)))
    r = evaluate(inst, np.stack([np.eye(2), -np.eye(2)]), anchored=True)
    assert r.saturated and r.node_errors[1] == pytest.approx(2 * np.pi**2)


# --------------------------------------------------------------------------
# Experiments


def test_single_trial_matches_evaluate():
    g = complete(6, NoiseModel.langevin(3, 3.0))
    cfg = ExperimentConfig(trials=1, seed=7)
    res = run_experiment(g, cfg)
    inst = synthesize(g, "random", (7, 0))
    direct = evaluate(inst, eig_sync(inst))
    assert res.emp_total == pytest.approx(direct.total, rel=1e-14)


def test_noiseless_experiment_is_zero():
    g = complete(6, NoiseModel.langevin(3, 3.0))
    res = run_experiment(g, ExperimentConfig(trials=3, seed=1, noiseless=True))
    assert res.emp_total < 1e-12 and res.crb.total > 0


def test_experiment_determinism_across_threads(monkeypatch):
    g = complete(10, NoiseModel.langevin_outlier(3, 4.0, 0.8))
    cfg = ExperimentConfig(trials=8, seed=5, pairs=((0, 1),))
    a = json.dumps(run_experiment(g, cfg).to_dict(cfg.pairs))
    monkeypatch.setenv("ROTSYNC_THREADS", "4")
    b = json.dumps(run_experiment(g, cfg).to_dict(cfg.pairs))
    assert a == b


def test_crb_consistency_high_snr():
    g = complete(20, NoiseModel.langevin(3, 30.0))
    assert crb_anchorfree(g).snr >= 100
    res = run_experiment(g, ExperimentConfig(trials=200, seed=17))
    assert res.emp_total >= 0.8 * res.crb.total


def test_rows_to_csv_columns():
    rows = [{"kappa": 1.0, "crb_total": 2.0, "emp_mse": 3.0, "emp_stderr": 0.1, "baseline": 5.0}]
    assert rows_to_csv(rows).splitlines()[0] == "kappa,crb_total,emp_mse,emp_stderr,baseline"


# --------------------------------------------------------------------------
# Random graphs


def test_random_graph_examples():
    m = NoiseModel.langevin(3, 1.0)
    assert complete(4, m).M == 6
    assert random_graph("erdos_renyi", 7, m, seed=1, q=1.0).M == 21
    g = random_graph("erdos_renyi", 500, m, seed=3, q=0.6)
    total = 500 * 499 / 2
    assert abs(g.M - 0.6 * total) < 4 * math.sqrt(total * 0.6 * 0.4)
    assert all(model == m for _, _, model in g.edges)


def test_random_graph_deterministic():
    m = NoiseModel.langevin(3, 1.0)
    a = random_graph("clustered", 30, m, seed=9, k=3, p_in=0.8, p_out=0.05)
    b = random_graph("clustered", 30, m, seed=9, k=3, p_in=0.8, p_out=0.05)
    assert a.edges == b.edges


def test_clustered_density():
    m = NoiseModel.langevin(3, 1.0)
    g = random_graph("clustered", 60, m, seed=2, k=2, p_in=1.0, p_out=0.0, require_connected=False)
    assert g.M == 2 * (30 * 29 // 2)


def test_random_graph_connectivity_failure():
    with pytest.raises(GraphError):
        random_graph("erdos_renyi", 30, NoiseModel.langevin(3, 1.0), seed=0, q=0.0)
