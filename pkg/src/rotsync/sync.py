"""Monte Carlo harness: synthetic problems, the eigenvector estimator, and error statistics."""

from __future__ import annotations

import csv
import io
import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .crb import CrbReport, baseline_variance, crb_anchored, crb_anchorfree
from .errors import ConvergenceError, DimensionMismatchError, GraphError, IllPosedError
from .graphcore import MeasurementGraph, build_laplacian, is_connected, laplacian_from_weights
from .noise import DEFAULT_QUAD, NoiseModel, QuadratureSpec, sample, sample_uniform
from .songeom import CUT_LOCUS_TOL, align_quotient, project_to_so, rotation_angles, sq_dist_from_identity

MAX_RESAMPLES = 100


@dataclass(frozen=True)
class ProblemInstance:
    """Ground truth plus one measurement per edge.

    ``measurements[k]`` is H_ij for the k-th edge (i < j) of ``graph.edges``;
    H_ji is H_ij transposed and never stored.
    """

    graph: MeasurementGraph
    truth: np.ndarray
    measurements: np.ndarray
    seed: object = None


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence([int(s) for s in seed]))
    return np.random.default_rng(seed)


def synthesize(g: MeasurementGraph, truth="random", seed=None, noiseless: bool = False) -> ProblemInstance:
    """Draw H_ij = Z_ij R_i R_j^T for every edge; ``noiseless`` sets every Z_ij = I."""
    rng = _rng(seed)
    if isinstance(truth, str):
        if truth != "random":
            raise ValueError(f"truth must be an array or 'random', got {truth!r}")
        R = sample_uniform(g.n, rng, size=g.N)
    else:
        R = np.asarray(truth, dtype=float)
        if R.shape != (g.N, g.n, g.n):
            raise DimensionMismatchError(f"truth must have shape {(g.N, g.n, g.n)}, got {R.shape}")
    if g.M == 0:
        return ProblemInstance(g, R, np.zeros((0, g.n, g.n)), seed)
    pairs = g.pairs
    rel = R[pairs[:, 0]] @ np.swapaxes(R[pairs[:, 1]], -1, -2)
    if noiseless:
        return ProblemInstance(g, R, rel, seed)
    Z = np.empty_like(rel)
    # draw per distinct model in first-appearance order so the stream is reproducible
    groups = {}
    for k, (_, _, model) in enumerate(g.edges):
        groups.setdefault(model, []).append(k)
    for model, idx in groups.items():
        Z[idx] = sample(model, rng, size=len(idx))
    return ProblemInstance(g, R, Z @ rel, seed)


def _block_matrix(inst: ProblemInstance) -> np.ndarray:
    n, N = inst.graph.n, inst.graph.N
    W = np.zeros((N, n, N, n))
    pairs = inst.graph.pairs
    if len(pairs):
        W[pairs[:, 0], :, pairs[:, 1], :] = inst.measurements
        W[pairs[:, 1], :, pairs[:, 0], :] = np.swapaxes(inst.measurements, -1, -2)
    return W.reshape(N * n, N * n)


def eig_sync(inst: ProblemInstance, anchored: bool = False) -> np.ndarray:
    """Spectral estimate: top-n eigenvectors of the measurement block matrix, projected blockwise."""
    g = inst.graph
    n, N = g.n, g.N
    W = _block_matrix(inst)
    try:
        _, V = scipy.linalg.eigh(W, subset_by_index=[N * n - n, N * n - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IllPosedError(f"eigendecomposition failed: {exc}") from None
    V = V[:, ::-1]
    blocks = V.reshape(N, n, n)
    if np.sum(np.linalg.det(blocks) < 0) > N / 2:
        blocks = blocks.copy()
        blocks[:, :, -1] *= -1.0
    s = np.linalg.svd(blocks, compute_uv=False)
    if np.any(s[:, -1] <= 1e-12 * s[:, 0]):
        warnings.warn("near-singular block in spectral estimate; projection is ambiguous", RuntimeWarning)
    est = project_to_so(blocks)
    if anchored:
        if not g.anchors:
            raise IllPosedError("anchored estimation needs at least one anchor")
        A = list(g.anchors)
        Q = project_to_so(np.sum(np.swapaxes(est[A], -1, -2) @ inst.truth[A], axis=0))
        est = est @ Q
        est[A] = inst.truth[A]
    return est


ESTIMATORS = {"eig": eig_sync}


@dataclass
class TrialResult:
    node_errors: np.ndarray
    pair_errors: np.ndarray
    wall_time: float
    estimator: str
    saturated: bool = False

    @property
    def total(self) -> float:
        return float(np.sum(self.node_errors))


def _saturated(R) -> bool:
    return bool(np.any(rotation_angles(R) > np.pi - CUT_LOCUS_TOL))


def evaluate(inst: ProblemInstance, est: np.ndarray, anchored: bool = False,
             pairs: Sequence = (), estimator: str = "eig", wall_time: float = 0.0) -> TrialResult:
    """Squared errors of ``est`` against the truth.

    Anchored errors are per node; anchor-free errors are taken after the best
    global alignment. Pair errors are gauge-free either way. Rotation angles
    at pi are reported with ``saturated`` set instead of raising.
    """
    R = inst.truth
    est = np.asarray(est, dtype=float)
    if est.shape != R.shape:
        raise DimensionMismatchError(f"estimate shape {est.shape} differs from truth {R.shape}")
    saturated = False
    if anchored:
        aligned = est
    else:
        try:
            Q, _ = align_quotient(R, est)
        except ConvergenceError as exc:
            Q, saturated = exc.best, True
        aligned = est @ Q
    resid = np.swapaxes(R, -1, -2) @ aligned
    node_errors = sq_dist_from_identity(resid)
    saturated = saturated or _saturated(resid)
    pair_errors = np.zeros(len(pairs))
    if len(pairs):
        P = np.asarray(pairs, dtype=int).reshape(-1, 2)
        true_rel = R[P[:, 0]] @ np.swapaxes(R[P[:, 1]], -1, -2)
        est_rel = est[P[:, 0]] @ np.swapaxes(est[P[:, 1]], -1, -2)
        rr = np.swapaxes(true_rel, -1, -2) @ est_rel
        pair_errors = sq_dist_from_identity(rr)
        saturated = saturated or _saturated(rr)
    return TrialResult(np.asarray(node_errors, dtype=float), np.asarray(pair_errors, dtype=float),
                       wall_time, estimator, saturated)


@dataclass(frozen=True)
class ExperimentConfig:
    trials: int = 20
    seed: int = 0
    estimator: str = "eig"
    anchored: bool = False
    corrected: bool = False
    pairs: tuple = ()
    noiseless: bool = False
    threads: Optional[int] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass
class ExperimentResult:
    trials: int
    emp_total: float
    emp_stderr: float
    emp_node: np.ndarray
    emp_pairs: np.ndarray
    crb: Optional[CrbReport]
    baseline: float
    saturated_trials: int
    totals: np.ndarray = field(repr=False, default=None)

    def to_dict(self, pairs=(), one_based: bool = True) -> dict:
        shift = 1 if one_based else 0
        return {
            "trials": self.trials,
            "emp_total": float(self.emp_total),
            "emp_stderr": float(self.emp_stderr),
            "emp_node": [float(v) for v in self.emp_node],
            "emp_pairs": [
                {"i": int(i) + shift, "j": int(j) + shift, "emp": float(v)}
                for (i, j), v in zip(pairs, self.emp_pairs)
            ],
            "crb": None if self.crb is None else self.crb.to_dict(pairs, one_based),
            "baseline": float(self.baseline),
            "saturated_trials": self.saturated_trials,
        }


def thread_count(config: ExperimentConfig) -> int:
    if config.threads is not None:
        return max(1, int(config.threads))
    env = os.environ.get("ROTSYNC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"ROTSYNC_THREADS must be an integer, got {env!r}") from None
    return 1


def run_trial(g: MeasurementGraph, config: ExperimentConfig, trial: int) -> TrialResult:
    inst = synthesize(g, "random", (config.seed, trial), noiseless=config.noiseless)
    start = time.perf_counter()
    est = ESTIMATORS[config.estimator](inst, anchored=config.anchored)
    elapsed = time.perf_counter() - start
    return evaluate(inst, est, config.anchored, config.pairs, config.estimator, elapsed)


def run_experiment(g: MeasurementGraph, config: ExperimentConfig,
                   spec: QuadratureSpec = DEFAULT_QUAD, with_crb: bool = True) -> ExperimentResult:
    """Average trial errors and put them next to the bound.

    Trial t draws from the stream seeded by (seed, t), so results do not depend
    on the number of threads; reduction happens in trial order.
    """
    threads = thread_count(config)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: run_trial(g, config, t), range(config.trials)))
    else:
        results = [run_trial(g, config, t) for t in range(config.trials)]
    totals = np.array([r.total for r in results])
    nodes = np.stack([r.node_errors for r in results])
    pairs = np.stack([r.pair_errors for r in results]) if config.pairs else np.zeros((len(results), 0))
    stderr = float(np.std(totals, ddof=1) / np.sqrt(len(totals))) if len(totals) > 1 else float("nan")
    report = None
    if with_crb:
        L = build_laplacian(g, spec)
        report = (crb_anchored if config.anchored else crb_anchorfree)(g, config.corrected, spec, L)
    free = g.N - len(g.anchors) if config.anchored else g.N - 1
    base = free * baseline_variance(g.n, spec) if g.n <= 4 else float("nan")
    return ExperimentResult(
        config.trials, float(np.mean(totals)), stderr, nodes.mean(axis=0), pairs.mean(axis=0),
        report, base, int(sum(r.saturated for r in results)), totals,
    )


SWEEP_COLUMNS = ("crb_total", "emp_mse", "emp_stderr", "baseline")


def sweep(make_graph: Callable[[float], MeasurementGraph], values: Sequence[float], param: str,
          config: ExperimentConfig, spec: QuadratureSpec = DEFAULT_QUAD) -> list:
    """Run one experiment per parameter value; ``emp_mse`` and ``crb_total`` are both summed over nodes."""
    if param not in ("kappa", "p"):
        raise ValueError("sweep parameter must be 'kappa' or 'p'")
    rows = []
    for v in values:
        res = run_experiment(make_graph(v), config, spec)
        rows.append({
            param: float(v),
            "crb_total": float(res.crb.total),
            "emp_mse": res.emp_total,
            "emp_stderr": res.emp_stderr,
            "baseline": res.baseline,
        })
    return rows


def rows_to_csv(rows: list) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def rows_to_json(rows: list) -> str:
    return json.dumps(rows, indent=2)


# --------------------------------------------------------------------------
# Random graphs


def _pairs_with_probability(rng, N, prob):
    iu, ju = np.triu_indices(N, 1)
    P = prob(iu, ju) if callable(prob) else np.full(len(iu), float(prob))
    keep = rng.random(len(iu)) < P
    return np.stack([iu[keep], ju[keep]], axis=1)


def _cluster_labels(N, k):
    return np.repeat(np.arange(k), [len(c) for c in np.array_split(np.arange(N), k)])


def random_graph(kind: str, N: int, noise: NoiseModel, seed=None, *, q: float = 1.0,
                 k: int = 2, p_in: float = 1.0, p_out: float = 0.1, anchors=(),
                 require_connected: bool = True) -> MeasurementGraph:
    """``complete``, ``erdos_renyi`` (density q) or ``clustered`` (k blocks, p_in / p_out).

    Clusters are contiguous index ranges of near-equal size.
    """
    if N < 1:
        raise GraphError("N must be positive")
    rng = _rng(seed)
    if kind == "complete":
        iu, ju = np.triu_indices(N, 1)
        return MeasurementGraph.uniform_model(N, np.stack([iu, ju], 1), noise, anchors)
    if kind == "erdos_renyi":
        if not 0 <= q <= 1:
            raise ValueError("q must lie in [0, 1]")
        prob = q
    elif kind == "clustered":
        if not (1 <= k <= N and 0 <= p_in <= 1 and 0 <= p_out <= 1):
            raise ValueError("clustered graph parameters out of range")
        labels = _cluster_labels(N, k)
        prob = lambda i, j: np.where(labels[i] == labels[j], p_in, p_out)  # noqa: E731
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    for _ in range(MAX_RESAMPLES):
        pairs = _pairs_with_probability(rng, N, prob)
        g = MeasurementGraph.uniform_model(N, pairs, noise, anchors)
        if not require_connected or _topologically_connected(N, pairs):
            return g
    raise GraphError(f"no connected {kind} sample after {MAX_RESAMPLES} attempts")


def _topologically_connected(N, pairs):
    return is_connected(laplacian_from_weights(N, pairs, np.ones(len(pairs))))
