"""Fisher information and Cramer-Rao bounds for synchronization on SO(n).

Bounds are in squared geodesic units, i.e. squared Frobenius norms of matrix
logarithms; for n = 2, 3 a rotation by angle theta sits at distance sqrt(2) theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from .errors import GraphError, IllPosedError, UnsupportedDimensionError
from .graphcore import (
    MeasurementGraph,
    SpectralKernel,
    WeightedLaplacian,
    build_laplacian,
    ectd_quad,
    is_connected,
    mask_anchors,
    spectral_kernel,
    trace_pinv,
    unanchored_components,
)
from .noise import DEFAULT_QUAD, NoiseModel, QuadratureSpec, info_weight, outlier_slope, weyl_integrate_angles
from .songeom import lie_dim

MAX_MATERIALIZED = 3000
ANCHORED = "anchored"
ANCHOR_FREE = "anchor-free"


@dataclass(frozen=True)
class FisherMatrix:
    """F = (1/d) (L kron I_d), kept in factored form."""

    d: int
    laplacian: np.ndarray
    masked: bool = False

    @property
    def N(self) -> int:
        return self.laplacian.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        X = np.asarray(x, dtype=float).reshape(self.N, self.d)
        return (self.laplacian @ X).reshape(-1) / self.d

    def materialize(self) -> np.ndarray:
        if self.N * self.d > MAX_MATERIALIZED:
            raise GraphError(f"refusing to materialize a {self.N * self.d}-square Fisher matrix")
        return np.kron(self.laplacian, np.eye(self.d)) / self.d


def fisher_matrix(
    g: MeasurementGraph, anchored: bool = False, spec: QuadratureSpec = DEFAULT_QUAD,
    laplacian: Optional[WeightedLaplacian] = None,
) -> FisherMatrix:
    L = laplacian if laplacian is not None else build_laplacian(g, spec)
    if anchored:
        if not g.anchors:
            raise IllPosedError("anchored Fisher matrix needs at least one anchor")
        return FisherMatrix(lie_dim(g.n), mask_anchors(L, g.anchors).matrix, True)
    return FisherMatrix(lie_dim(g.n), L.matrix.copy(), False)


def baseline_variance(n: int, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Expected squared distance to the identity of a Haar-uniform rotation."""
    if n == 2:
        return 2 * math.pi**2 / 3
    if n == 3:
        return 2 * math.pi**2 / 3 + 4
    if n == 4:
        return weyl_integrate_angles(4, lambda a, b: 2 * (a * a + b * b), spec)
    raise UnsupportedDimensionError(f"baseline variance available for n in {{2, 3, 4}}, got {n}")


@dataclass
class CrbReport:
    mode: str
    n: int
    N: int
    d: int
    total: float
    per_node: Optional[np.ndarray]
    corrected: bool
    snr: float
    baseline: float
    anchors: tuple = ()
    curvature_warning: bool = False
    kernel: Optional[SpectralKernel] = field(default=None, repr=False)

    @property
    def valid(self) -> bool:
        """False when the bound exceeds what a random guess achieves (low-SNR regime)."""
        if self.total > self.baseline:
            return False
        if self.per_node is not None and self.n in (2, 3, 4):
            return bool(np.all(self.per_node <= baseline_variance(self.n)))
        return True

    def pair_bound(self, i: int, j: int) -> float:
        """d^2 times the squared commute-time distance; uncorrected."""
        if self.mode != ANCHOR_FREE:
            raise GraphError("pair bounds are reported for anchor-free problems")
        return self.d**2 * ectd_quad(self.kernel, i, j)

    def rms_angles(self) -> Optional[np.ndarray]:
        """Per-node bound expressed as an RMS rotation angle (n = 2, 3 only)."""
        if self.per_node is None or self.n not in (2, 3):
            return None
        return np.sqrt(self.per_node / 2.0)

    def to_dict(self, pairs=(), one_based: bool = True) -> dict:
        shift = 1 if one_based else 0
        out = {
            "mode": self.mode,
            "n": self.n,
            "N": self.N,
            "d": self.d,
            "corrected": self.corrected,
            "total": float(self.total),
            "snr": float(self.snr),
            "baseline": float(self.baseline),
            "valid": self.valid,
            "curvature_warning": self.curvature_warning,
            "anchors": [a + shift for a in self.anchors],
        }
        if self.per_node is not None:
            out["per_node"] = [float(v) for v in self.per_node]
            rms = self.rms_angles()
            if rms is not None:
                out["rms_angle"] = [float(v) for v in rms]
        if pairs:
            out["pairs"] = [
                {"i": i + shift, "j": j + shift, "bound": float(self.pair_bound(i, j))} for i, j in pairs
            ]
        return out


def _corrected_diag(n: int, x: np.ndarray) -> np.ndarray:
    """Per-node block traces of the curvature-corrected bound, given diag of the pseudoinverse."""
    d = lie_dim(n)
    if n == 2:
        return d * d * x
    if n == 3:
        # block i of 3 (X - (DX + XD)/4) kron I_3 has trace 9 (x_ii - x_ii^2 / 2)
        return 9.0 * (x - 0.5 * x * x)
    raise UnsupportedDimensionError(f"curvature correction only available for n in {{2, 3}}, got {n}")


def corrected_matrix_n3(P: np.ndarray) -> np.ndarray:
    """3 (P - (ddiag(P) P + P ddiag(P)) / 4), the n = 3 bound before the Kronecker factor."""
    D = np.diag(np.diag(P))
    return 3.0 * (P - 0.25 * (D @ P + P @ D))


def _ensure_laplacian(g, spec, laplacian):
    return laplacian if laplacian is not None else build_laplacian(g, spec)


def crb_anchored(
    g: MeasurementGraph, corrected: bool = False, spec: QuadratureSpec = DEFAULT_QUAD,
    laplacian: Optional[WeightedLaplacian] = None,
) -> CrbReport:
    if not g.anchors:
        raise IllPosedError("anchored bound needs at least one anchor")
    L = _ensure_laplacian(g, spec, laplacian)
    loose = unanchored_components(L, g.anchors)
    if loose:
        raise IllPosedError(f"{len(loose)} connected component(s) contain no anchor")
    d = lie_dim(g.n)
    k = spectral_kernel(mask_anchors(L, g.anchors))
    x = np.diag(k.pinv).copy()
    x[list(g.anchors)] = 0.0
    per_node = _corrected_diag(g.n, x) if corrected else d * d * x
    trace_uncorrected = float(np.sum(x))
    free = g.N - len(g.anchors)
    base = baseline_variance(g.n, spec) if g.n <= 4 else math.inf
    snr = _snr(free, base, d, trace_uncorrected)
    return CrbReport(
        ANCHORED, g.n, g.N, d, float(np.sum(per_node)), per_node, corrected, snr,
        free * base, g.anchors, curvature_warning=g.n >= 4, kernel=k,
    )


def crb_anchorfree(
    g: MeasurementGraph, corrected: bool = False, spec: QuadratureSpec = DEFAULT_QUAD,
    laplacian: Optional[WeightedLaplacian] = None,
) -> CrbReport:
    """Anchor-free bound on the aligned error.

    The corrected n = 3 variant reuses the anchored correction with L^+ in place
    of L_A^+; the additional quotient-space term decays like 1/N and is dropped.
    """
    L = _ensure_laplacian(g, spec, laplacian)
    if not is_connected(L):
        raise IllPosedError("anchor-free bound needs a connected graph with positive weights")
    if corrected and g.n not in (2, 3):
        raise UnsupportedDimensionError(f"curvature correction only available for n in {{2, 3}}, got {g.n}")
    d = lie_dim(g.n)
    k = spectral_kernel(L)
    tr = trace_pinv(k)
    if corrected:
        total = float(np.sum(_corrected_diag(g.n, np.diag(k.pinv))))
    else:
        total = d * d * tr
    base = baseline_variance(g.n, spec) if g.n <= 4 else math.inf
    snr = _snr(g.N - 1, base, d, tr)
    return CrbReport(
        ANCHOR_FREE, g.n, g.N, d, total, None, corrected, snr, (g.N - 1) * base, (),
        curvature_warning=g.n >= 4, kernel=k,
    )


def _snr(free: int, base: float, d: int, trace: float) -> float:
    if trace <= 0:
        return math.inf
    return free * base / (d * d * trace)


def snr_anchorfree(g: MeasurementGraph, spec: QuadratureSpec = DEFAULT_QUAD,
                   laplacian: Optional[WeightedLaplacian] = None) -> float:
    return crb_anchorfree(g, False, spec, laplacian).snr


def snr_anchored(g: MeasurementGraph, spec: QuadratureSpec = DEFAULT_QUAD,
                 laplacian: Optional[WeightedLaplacian] = None) -> float:
    return crb_anchored(g, False, spec, laplacian).snr


def outlier_threshold(n: int, kappa: float, eps: float, N: int, M: int,
                      spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Smallest inlier probability meeting an RMS accuracy eps, from graph statistics alone."""
    if not (kappa > 0 and eps > 0):
        raise ValueError("kappa and eps must be positive")
    if M < 1 or N < 2:
        raise ValueError("need N >= 2 and M >= 1")
    a = outlier_slope(n, kappa, spec)
    return lie_dim(n) / (math.sqrt(a) * eps) * math.sqrt(N / (2.0 * M))


def required_inlier_probability(
    unit_trace: float, N: int, n: int, kappa: float, eps: float,
    spec: QuadratureSpec = DEFAULT_QUAD, xtol: float = 1e-10,
) -> float:
    """Smallest p for which the anchor-free mean squared error bound d^2 tr(L^+) / (N - 1) reaches eps^2.

    ``unit_trace`` is tr(L^+) of the graph with unit edge weights; with one
    outlier model on every edge, tr(L^+) = unit_trace / w(p) and the exact
    weight w(p) is solved for by root finding.
    """
    d = lie_dim(n)
    target = d * d * unit_trace / ((N - 1) * eps * eps)

    def gap(p):
        return info_weight(NoiseModel.langevin_outlier(n, kappa, p), spec) - target

    if gap(1.0) < 0:
        raise IllPosedError(f"accuracy {eps} is out of reach even without outliers")
    return float(scipy.optimize.brentq(gap, 1e-12, 1.0, xtol=xtol))
