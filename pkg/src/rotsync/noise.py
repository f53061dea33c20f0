"""Isotropic noise models on SO(n).

Densities are taken with respect to the normalized Haar measure. All of the
Langevin-type quantities are evaluated in a scaled form: with ``t = tr Z`` and
``chat_n(kappa) = c_n(kappa) exp(-n kappa)`` the Langevin density is
``exp(kappa (t - n)) / chat_n``, whose numerator never exceeds 1. This keeps
weights and normalizers finite for concentrations in the hundreds.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from itertools import permutations, product
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.special

from .errors import (
    GraphError,
    InvalidDimensionError,
    QuadratureError,
    SamplerStuckError,
    UnsupportedDimensionError,
)
from .songeom import canonical_basis, hat3, lie_dim, planar_rotation, skew

UNIFORM = "uniform"
LANGEVIN = "langevin"
LANGEVIN_OUTLIER = "langevin_outlier"
KINDS = (UNIFORM, LANGEVIN, LANGEVIN_OUTLIER)

MAX_PROPOSALS = 10**7
ANGLE_TABLE_SIZE = 4096


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings for the one- and two-dimensional torus integrals.

    ``rule`` is ``"adaptive"`` (QUADPACK adaptive Gauss-Kronrod) or
    ``"gauss-legendre"`` (composite Gauss-Legendre, panels doubled until two
    successive estimates agree). Convergence is declared at
    ``max(abs_tol, rel_tol * |value|)``.
    """

    rule: str = "adaptive"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-12
    max_subdivisions: int = 2**20

    def __post_init__(self):
        if self.rule not in ("adaptive", "gauss-legendre"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be non-negative")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    n: int
    kappa: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        lie_dim(self.n)
        if self.kind == UNIFORM:
            object.__setattr__(self, "kappa", 0.0)
            object.__setattr__(self, "p", 0.0)
        elif self.kind == LANGEVIN:
            object.__setattr__(self, "p", 1.0)
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")

    @classmethod
    def uniform(cls, n):
        return cls(UNIFORM, n)

    @classmethod
    def langevin(cls, n, kappa):
        return cls(LANGEVIN, n, float(kappa))

    @classmethod
    def langevin_outlier(cls, n, kappa, p):
        return cls(LANGEVIN_OUTLIER, n, float(kappa), float(p))

    def to_json(self) -> dict:
        if self.kind == UNIFORM:
            return {"kind": UNIFORM}
        if self.kind == LANGEVIN:
            return {"kind": LANGEVIN, "kappa": self.kappa}
        return {"kind": LANGEVIN_OUTLIER, "kappa": self.kappa, "p": self.p}

    @classmethod
    def from_json(cls, data: dict, n: int) -> "NoiseModel":
        if not isinstance(data, dict) or "kind" not in data:
            raise GraphError(f"noise model must be an object with a 'kind' field, got {data!r}")
        kind = data["kind"]
        try:
            if kind == UNIFORM:
                return cls.uniform(n)
            if kind == LANGEVIN:
                return cls.langevin(n, data["kappa"])
            if kind == LANGEVIN_OUTLIER:
                return cls.langevin_outlier(n, data["kappa"], data["p"])
        except KeyError as exc:
            raise GraphError(f"noise model {data!r} is missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise GraphError(f"invalid noise model {data!r}: {exc}") from None
        raise GraphError(f"unknown noise kind {kind!r}")


# --------------------------------------------------------------------------
# Special functions and quadrature


def bessel_I(nu: int, x: float, scaled: bool = False) -> float:
    """Modified Bessel function of the first kind ``I_nu(x)``.

    With ``scaled=True`` returns ``exp(-x) I_nu(x)``, which stays finite for
    any ``x``. The unscaled value raises ``OverflowError`` once it exceeds the
    double range.
    """
    if int(nu) != nu or nu < 0:
        raise ValueError(f"order must be a non-negative integer, got {nu}")
    if np.any(np.asarray(x) < 0):
        raise ValueError("argument must be non-negative")
    if scaled:
        return scipy.special.ive(nu, x)
    val = scipy.special.iv(nu, x)
    if np.any(np.isinf(val)):
        raise OverflowError(f"I_{nu}({x}) overflows; use scaled=True")
    return val


def _check_warnings(caught, what, err, target):
    # QUADPACK also warns when roundoff merely caps the attainable accuracy;
    # only fail when the error estimate is clearly outside the target
    for w in caught:
        if issubclass(w.category, scipy.integrate.IntegrationWarning) and err > 100.0 * target:
            raise QuadratureError(f"{what}: {w.message}")


def _quad_1d(h: Callable, a: float, b: float, spec: QuadratureSpec) -> float:
    """Integrate a vectorized callable over [a, b]."""
    if spec.rule == "adaptive":
        limit = int(min(spec.max_subdivisions, 100_000))
        # class-function integrands peak at the identity (angle 0); a breakpoint
        # there keeps QUADPACK from stepping over very narrow peaks
        points = [0.0] if a < 0.0 < b else None
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            val, err = scipy.integrate.quad(
                lambda t: float(h(np.array([t]))[0]),
                a,
                b,
                epsabs=spec.abs_tol,
                epsrel=spec.rel_tol,
                limit=limit,
                points=points,
            )
        _check_warnings(
            caught, "adaptive quadrature", err, max(spec.abs_tol, spec.rel_tol * abs(val))
        )
        if not np.isfinite(val):
            raise QuadratureError("non-finite integral")
        return val
    return _gauss_legendre_1d(h, a, b, spec)


def _gauss_legendre_1d(h, a, b, spec):
    x, w = np.polynomial.legendre.leggauss(20)
    prev = None
    panels = 1
    while panels <= spec.max_subdivisions:
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        val = float(np.dot(weights, h(nodes)))
        if not np.isfinite(val):
            raise QuadratureError("non-finite integral")
        if prev is not None and abs(val - prev) <= max(spec.abs_tol, spec.rel_tol * abs(val)):
            return val
        prev = val
        panels *= 2
    raise QuadratureError("Gauss-Legendre rule did not reach the requested tolerance")


def _quad_2d(h: Callable, spec: QuadratureSpec) -> float:
    """Integrate a vectorized ``h(t1, t2)`` over [-pi, pi]^2."""
    if spec.rule == "gauss-legendre":
        x, w = np.polynomial.legendre.leggauss(20)
        prev = None
        panels = 1
        while panels <= spec.max_subdivisions:
            edges = np.linspace(-np.pi, np.pi, panels + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
            weights = (half[:, None] * w[None, :]).ravel()
            T1, T2 = np.meshgrid(nodes, nodes, indexing="ij")
            val = float(weights @ h(T1, T2) @ weights)
            if not np.isfinite(val):
                raise QuadratureError("non-finite integral")
            if prev is not None and abs(val - prev) <= max(spec.abs_tol, spec.rel_tol * abs(val)):
                return val
            prev = val
            panels *= 2
            if panels > 64:
                break
        raise QuadratureError("Gauss-Legendre rule did not reach the requested tolerance")

    # adaptive outer integral; the inner one is vectorized Gauss-Legendre with panel doubling
    inner_spec = QuadratureSpec(
        "gauss-legendre", spec.abs_tol / (4 * np.pi), spec.rel_tol, spec.max_subdivisions
    )

    def inner(t1):
        return _gauss_legendre_1d(lambda t2: h(np.full_like(t2, t1), t2), -np.pi, np.pi, inner_spec)

    return _quad_1d(np.vectorize(inner), -np.pi, np.pi, spec)


def torus_element(n: int, angles) -> np.ndarray:
    """Block-diagonal rotation(s) built from planar blocks, padded with 1 for odd n."""
    angles = np.asarray(angles, dtype=float)
    k = n // 2
    if angles.shape[-1] != k:
        raise InvalidDimensionError(f"need {k} angles for n={n}")
    out = np.zeros(angles.shape[:-1] + (n, n))
    for b in range(k):
        out[..., 2 * b : 2 * b + 2, 2 * b : 2 * b + 2] = planar_rotation(angles[..., b])
    if n % 2:
        out[..., n - 1, n - 1] = 1.0
    return out


def weyl_integrate_angles(n: int, h: Callable, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Haar integral of a class function given as a function of its torus angles.

    ``h`` is vectorized: ``h(theta)`` for n = 2, 3 and ``h(theta1, theta2)`` for n = 4.
    """
    if n == 2:
        return _quad_1d(h, -np.pi, np.pi, spec) / (2 * np.pi)
    if n == 3:
        return _quad_1d(lambda t: h(t) * (1.0 - np.cos(t)), -np.pi, np.pi, spec) / (2 * np.pi)
    if n == 4:
        # |e^{i a} - e^{i b}|^2 |e^{i a} - e^{-i b}|^2 = 4 (cos a - cos b)^2
        def weighted(t1, t2):
            return h(t1, t2) * 4.0 * (np.cos(t1) - np.cos(t2)) ** 2

        return _quad_2d(weighted, spec) / (4 * (2 * np.pi) ** 2)
    raise UnsupportedDimensionError(f"Weyl integration implemented for n in {{2, 3, 4}}, got {n}")


def weyl_integrate(
    n: int, g: Callable, spec: QuadratureSpec = DEFAULT_QUAD, vectorized: bool = False
) -> float:
    """Integral of a class function ``g`` over SO(n) against normalized Haar measure.

    ``g`` receives an ``(n, n)`` rotation, or a ``(..., n, n)`` stack when
    ``vectorized`` is set.
    """
    if n not in (2, 3, 4):
        raise UnsupportedDimensionError(f"Weyl integration implemented for n in {{2, 3, 4}}, got {n}")

    def call(Z):
        if vectorized:
            return np.asarray(g(Z), dtype=float)
        flat = Z.reshape(-1, n, n)
        return np.array([g(z) for z in flat], dtype=float).reshape(Z.shape[:-2])

    if n in (2, 3):
        return weyl_integrate_angles(n, lambda t: call(torus_element(n, t[..., None])), spec)
    return weyl_integrate_angles(
        4, lambda t1, t2: call(torus_element(4, np.stack([t1, t2], axis=-1))), spec
    )


# --------------------------------------------------------------------------
# Normalizers, densities, scores


def scaled_normalizer(n: int, kappa: float) -> float:
    """``c_n(kappa) * exp(-n kappa)`` from closed forms in Bessel functions."""
    x = 2.0 * kappa
    i0, i1 = bessel_I(0, x, scaled=True), bessel_I(1, x, scaled=True)
    if n == 2:
        return i0
    if n == 3:
        return i0 - i1
    if n == 4:
        i2 = bessel_I(2, x, scaled=True)
        return i0 * i0 - 2.0 * i1 * i1 + i0 * i2
    raise UnsupportedDimensionError(f"closed-form normalizer available for n in {{2, 3, 4}}, got {n}")


def normalizer(model: NoiseModel) -> float:
    """Normalization constant ``c_n(kappa)`` of the Langevin component."""
    if model.kind == UNIFORM:
        raise ValueError("the uniform model has no Langevin normalizer")
    return scaled_normalizer(model.n, model.kappa) * math.exp(model.n * model.kappa)


def _trace(Z):
    return np.trace(Z, axis1=-2, axis2=-1)


def _langevin_part(model, t):
    """Scaled Langevin density ``exp(kappa (t - n)) / chat`` (times p for the outlier mix)."""
    chat = scaled_normalizer(model.n, model.kappa)
    return model.p * np.exp(model.kappa * (t - model.n)) / chat


def pdf(model: NoiseModel, Z: np.ndarray) -> np.ndarray:
    """Density of ``Z`` (or a stack of rotations) with respect to normalized Haar measure."""
    Z = np.asarray(Z, dtype=float)
    if model.kind == UNIFORM or (model.kind == LANGEVIN_OUTLIER and model.p == 0.0):
        return np.ones(Z.shape[:-2]) if Z.ndim > 2 else 1.0
    L = _langevin_part(model, _trace(Z))
    if model.kind == LANGEVIN:
        return L
    return L + (1.0 - model.p)


def log_pdf(model: NoiseModel, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if model.kind == LANGEVIN:
        return model.kappa * (_trace(Z) - model.n) - math.log(scaled_normalizer(model.n, model.kappa))
    return np.log(pdf(model, Z))


def score_coefficient(model: NoiseModel, t) -> np.ndarray:
    """Scalar ``s`` with ``G(Z) = s * skew(Z)``, as a function of ``t = tr Z``."""
    t = np.asarray(t, dtype=float)
    if model.kind == UNIFORM or model.kappa == 0.0 or model.p == 0.0:
        return np.zeros_like(t)
    if model.kind == LANGEVIN:
        return np.full_like(t, model.kappa)
    L = _langevin_part(model, t)
    f = L + 1.0 - model.p
    return model.kappa * np.divide(L, f, out=np.zeros_like(L), where=f > 0)


def score(model: NoiseModel, Z: np.ndarray) -> np.ndarray:
    """Skew factor ``G(Z)`` of the Riemannian score: ``grad log f(Z) = Z G(Z)^T``."""
    Z = np.asarray(Z, dtype=float)
    s = score_coefficient(model, _trace(Z))
    return s[..., None, None] * skew(Z)


def riemannian_grad_log_pdf(model: NoiseModel, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    return Z @ np.swapaxes(score(model, Z), -1, -2)


# --------------------------------------------------------------------------
# Information weights


def _torus_trace_and_skew(n, *angles):
    t = sum(2.0 * np.cos(a) for a in angles) + (1.0 if n % 2 else 0.0)
    sk = sum(2.0 * np.sin(a) ** 2 for a in angles)
    return t, sk


def _weight_integral(model: NoiseModel, spec: QuadratureSpec) -> float:
    """``E ||grad log f||^2 = int s(t)^2 ||skew Z||^2 f(Z) dmu`` on the maximal torus."""
    n = model.n

    def integrand(*angles):
        t, sk = _torus_trace_and_skew(n, *angles)
        L = _langevin_part(model, t)
        f = L + (1.0 - model.p)
        # s^2 f = kappa^2 L^2 / f; L underflows to 0 far in the tail
        ratio = np.divide(L, f, out=np.zeros_like(L), where=f > 0)
        return model.kappa**2 * L * ratio * sk

    if n in (2, 3):
        # integrand is even in the angle
        def half(t):
            return integrand(t)

        if n == 2:
            return _quad_1d(half, 0.0, np.pi, spec) / np.pi
        return _quad_1d(lambda t: half(t) * (1.0 - np.cos(t)), 0.0, np.pi, spec) / np.pi
    if n == 4:
        return weyl_integrate_angles(4, integrand, spec)
    raise UnsupportedDimensionError(f"information weight implemented for n in {{2, 3, 4}}, got {n}")


def langevin_weight(n: int, kappa: float) -> float:
    """Closed-form information weight of the pure Langevin density for n = 2, 3."""
    x = 2.0 * kappa
    i0, i1 = bessel_I(0, x, scaled=True), bessel_I(1, x, scaled=True)
    if n == 2:
        return kappa * i1 / i0
    if n == 3:
        # (k/2)((2 - k) I1 + k I3) / (I0 - I1), rewritten with I1 - I3 = (2/k) I2
        # to avoid the O(k^2) cancellation between the I1 and I3 terms
        i2 = bessel_I(2, x, scaled=True)
        return kappa * (i1 - i2) / (i0 - i1)
    raise UnsupportedDimensionError(f"closed-form Langevin weight only for n in {{2, 3}}, got {n}")


def info_weight(model: NoiseModel, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Fisher information weight ``E ||grad log f(Z)||^2`` of a noise model."""
    if model.kind == UNIFORM or model.kappa == 0.0 or model.p == 0.0:
        return 0.0
    if model.kind == LANGEVIN and model.n in (2, 3):
        return float(langevin_weight(model.n, model.kappa))
    return float(_weight_integral(model, spec))


def outlier_slope(n: int, kappa: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Coefficient ``a`` in ``w(p) = a p^2 + O(p^3)`` for the Langevin/outlier mix."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if n not in (2, 3):
        raise UnsupportedDimensionError(f"outlier slope implemented for n in {{2, 3}}, got {n}")
    chat = scaled_normalizer(n, kappa)

    def integrand(t):
        tr, sk = _torus_trace_and_skew(n, t)
        return kappa**2 * np.exp(2.0 * kappa * (tr - n)) / chat**2 * sk

    if n == 2:
        return _quad_1d(integrand, 0.0, np.pi, spec) / np.pi
    return _quad_1d(lambda t: integrand(t) * (1.0 - np.cos(t)), 0.0, np.pi, spec) / np.pi


# --------------------------------------------------------------------------
# Sampling


def _batch(size):
    return () if size is None else ((size,) if np.isscalar(size) else tuple(size))


def sample_uniform(n: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-uniform rotation(s): Gaussian matrix, QR, sign fix, column swap if det < 0."""
    lie_dim(n)
    shape = _batch(size)
    count = int(np.prod(shape)) if shape else 1
    A = rng.standard_normal((count, n, n))
    Q, R = np.linalg.qr(A)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    bad = d == 0
    while np.any(bad):
        # exact zero on the diagonal of R: redraw those matrices
        idx = np.flatnonzero(bad.any(axis=-1))
        A2 = rng.standard_normal((idx.size, n, n))
        Q[idx], R2 = np.linalg.qr(A2)
        d[idx] = np.sign(np.diagonal(R2, axis1=-2, axis2=-1))
        bad = d == 0
    Q = Q * d[:, None, :]
    neg = np.linalg.det(Q) < 0
    Q[neg] = Q[neg][:, :, [1, 0] + list(range(2, n))]
    return Q.reshape(shape + (n, n)) if shape else Q[0]


@functools.lru_cache(maxsize=64)
def _angle_table_so3(kappa: float):
    """Tabulated CDF of the rotation angle of Langevin(kappa) on SO(3).

    Density on [0, pi] is proportional to ``(1 - cos t) exp(2 kappa (cos t - 1))``.
    The table is truncated where the exponential factor drops below e^-60.
    """
    if kappa * 4.0 <= 60.0:
        hi = np.pi
    else:
        hi = float(np.arccos(1.0 - 30.0 / kappa))
    grid = np.linspace(0.0, hi, ANGLE_TABLE_SIZE)
    dens = (1.0 - np.cos(grid)) * np.exp(2.0 * kappa * (np.cos(grid) - 1.0))
    mass = 0.5 * np.diff(grid) * (dens[:-1] + dens[1:])
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    return grid, dens, cdf / cdf[-1], dens / cdf[-1]


def _sample_so3_angles(kappa, rng, count):
    grid, _, cdf, dens = _angle_table_so3(float(kappa))
    u = rng.random(count)
    k = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(grid) - 2)
    h = grid[k + 1] - grid[k]
    f0, f1 = dens[k], dens[k + 1]
    r = u - cdf[k]
    # invert the piecewise-linear density within the bin: f0 x + (f1 - f0) x^2 / (2h) = r
    slope = (f1 - f0) / h
    lin = np.abs(slope) * h < 1e-12 * np.maximum(f0, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(f0 * f0 + 2.0 * slope * r, 0.0))
        x = np.where(lin, r / np.maximum(f0, 1e-300), 2.0 * r / (f0 + disc))
    return grid[k] + np.clip(x, 0.0, h)


def _sample_langevin(n, kappa, rng, count, max_proposals):
    if kappa == 0.0:
        return sample_uniform(n, rng, count)
    if n == 2:
        return planar_rotation(rng.vonmises(0.0, 2.0 * kappa, count))
    if n == 3:
        theta = _sample_so3_angles(kappa, rng, count)
        axis = rng.standard_normal((count, 3))
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        s = np.sin(theta)[:, None, None]
        c = (1.0 - np.cos(theta))[:, None, None]
        A = hat3(axis)
        return np.eye(3) + s * A + c * (A @ A)
    out = np.empty((count, n, n))
    filled = 0
    proposals = 0
    batch = 4096
    while filled < count:
        if proposals >= max_proposals:
            raise SamplerStuckError(
                f"rejection sampler exceeded {max_proposals} proposals (kappa={kappa}, n={n})"
            )
        m = min(batch, max_proposals - proposals)
        Z = sample_uniform(n, rng, m)
        proposals += m
        accept = rng.random(m) < np.exp(kappa * (_trace(Z) - n))
        take = Z[accept][: count - filled]
        out[filled : filled + len(take)] = take
        filled += len(take)
    return out


def sample(model: NoiseModel, rng: np.random.Generator, size=None, max_proposals: int = MAX_PROPOSALS):
    """Draw rotation(s) from ``model``; ``size=None`` returns a single ``(n, n)`` matrix."""
    shape = _batch(size)
    count = int(np.prod(shape)) if shape else 1
    n = model.n
    if model.kind == UNIFORM:
        Z = sample_uniform(n, rng, count)
    elif model.kind == LANGEVIN:
        Z = _sample_langevin(n, model.kappa, rng, count, max_proposals)
    else:
        inlier = rng.random(count) < model.p
        Z = sample_uniform(n, rng, count)
        k = int(inlier.sum())
        if k:
            Z[inlier] = _sample_langevin(n, model.kappa, rng, k, max_proposals)
    return Z.reshape(shape + (n, n)) if shape else Z[0]


# --------------------------------------------------------------------------
# Test support


def construct_signed_permutation(n: int, k: int, l: int) -> np.ndarray:
    """Signed permutation ``P`` with ``P^T E_k P = E_l`` and ``P^T E_l P = -E_k``.

    ``E`` is :func:`canonical_basis`. Only the (at most four) indices touched by
    the two basis elements are permuted; the search over their signed
    permutations is exhaustive and returns the first match in a fixed order.
    """
    E = canonical_basis(n)
    d = len(E)
    if not (0 <= k < d and 0 <= l < d) or k == l:
        raise ValueError(f"need distinct basis indices in [0, {d}), got {k}, {l}")
    support = sorted(set(np.flatnonzero(np.abs(E[k]).sum(axis=0))) | set(np.flatnonzero(np.abs(E[l]).sum(axis=0))))
    for perm in permutations(range(len(support))):
        for signs in product((1.0, -1.0), repeat=len(support)):
            P = np.eye(n)
            for src, dst in enumerate(perm):
                P[support[src], :] = 0.0
            for src, dst in enumerate(perm):
                P[support[src], support[dst]] = signs[src]
            if np.array_equal(P.T @ E[k] @ P, E[l]) and np.array_equal(P.T @ E[l] @ P, -E[k]):
                return P
    raise AssertionError("no signed permutation found")  # unreachable: such a permutation always exists
