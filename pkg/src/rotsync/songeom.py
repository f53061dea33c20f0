"""Riemannian geometry of SO(n), its products, and the quotient by a global rotation.

Rotations are plain ``(n, n)`` arrays and tuples of rotations are ``(N, n, n)``
stacks. Tangent vectors at a point ``Q`` are represented by their skew factor
``Omega`` (the actual tangent vector being ``Q @ Omega``). The metric is the
Frobenius inner product, so the geodesic distance between two rotations is the
Frobenius norm of the principal log of ``Q1.T @ Q2``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import (
    AnchoredViolationError,
    ConvergenceError,
    CutLocusError,
    DimensionMismatchError,
    InvalidDimensionError,
)

ORTHO_TOL = 1e-12
CUT_LOCUS_TOL = 1e-8
ANCHOR_TOL = 1e-12


def lie_dim(n: int) -> int:
    """Dimension n(n-1)/2 of SO(n)."""
    if int(n) != n or n < 2:
        raise InvalidDimensionError(f"rotation dimension must be an integer >= 2, got {n!r}")
    n = int(n)
    return n * (n - 1) // 2


def skew(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M - np.swapaxes(M, -1, -2))


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 2:
        return False
    n = R.shape[0]
    if np.linalg.norm(R.T @ R - np.eye(n)) > tol * max(1.0, n):
        return False
    return abs(np.linalg.det(R) - 1.0) <= tol * max(1.0, n)


def is_skew(M: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    return M.ndim == 2 and M.shape[0] == M.shape[1] and np.linalg.norm(M + M.T) <= tol


def _square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionMismatchError(f"{name} must be square, got shape {M.shape}")
    if M.shape[-1] < 2:
        raise InvalidDimensionError(f"{name} must be at least 2x2, got shape {M.shape}")
    return M


def _same_shape(A, B):
    if A.shape[-2:] != B.shape[-2:]:
        raise DimensionMismatchError(f"shape mismatch: {A.shape} vs {B.shape}")


def project_tangent(Q: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Orthogonal projection of the ambient matrix ``H`` onto the tangent space at ``Q``.

    Returns the skew factor ``Omega = skew(Q.T H)``; the projected tangent
    vector itself is ``Q @ Omega``.
    """
    Q = _square(Q, "Q")
    H = _square(H, "H")
    _same_shape(Q, H)
    return skew(np.swapaxes(Q, -1, -2) @ H)


def hat3(w: np.ndarray) -> np.ndarray:
    """Map ``(..., 3)`` vectors to ``(..., 3, 3)`` skew matrices (cross-product form)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee3(W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    return np.stack([W[..., 2, 1], W[..., 0, 2], W[..., 1, 0]], axis=-1)


def planar_rotation(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(theta.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _expm_skew(W: np.ndarray) -> np.ndarray:
    n = W.shape[-1]
    if n == 2:
        return planar_rotation(W[..., 1, 0])
    if n == 3:
        w = vee3(W)
        theta = np.linalg.norm(w, axis=-1)
        small = theta < 1e-6
        t = np.where(small, 1.0, theta)
        a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(t) / t)
        b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(t)) / t**2)
        W2 = W @ W
        return np.eye(3) + a[..., None, None] * W + b[..., None, None] * W2
    if W.ndim == 2:
        R = scipy.linalg.expm(W)
    else:
        R = np.stack([scipy.linalg.expm(w) for w in W.reshape(-1, n, n)]).reshape(W.shape)
    return R


def expm_skew(W: np.ndarray) -> np.ndarray:
    """Matrix exponential of (a stack of) skew-symmetric matrices."""
    W = _square(W, "Omega")
    return _expm_skew(skew(W))


def exp_map(Q: np.ndarray, Omega: np.ndarray) -> np.ndarray:
    """Riemannian exponential ``Q expm(Omega)``."""
    Q = _square(Q, "Q")
    Omega = _square(Omega, "Omega")
    _same_shape(Q, Omega)
    return Q @ _expm_skew(skew(Omega))


def _log2(R):
    theta = np.arctan2(R[..., 1, 0] - R[..., 0, 1], R[..., 0, 0] + R[..., 1, 1])
    if np.any(np.abs(theta) > np.pi - CUT_LOCUS_TOL):
        raise CutLocusError("rotation angle at pi: principal logarithm undefined")
    out = np.zeros(R.shape)
    out[..., 1, 0] = theta
    out[..., 0, 1] = -theta
    return out


def _log3(R):
    v = 0.5 * vee3(R - np.swapaxes(R, -1, -2))
    s = np.linalg.norm(v, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if np.any(theta > np.pi - CUT_LOCUS_TOL):
        raise CutLocusError("rotation angle at pi: principal logarithm undefined")
    theta = np.atleast_1d(theta)
    Rf = R.reshape(-1, 3, 3)
    vf = v.reshape(-1, 3)
    sf = np.atleast_1d(s).ravel()
    cf = np.atleast_1d(c).ravel()
    th = theta.ravel()
    w = np.empty_like(vf)
    small = th < 1e-6
    mid = (~small) & (th <= 2.5)
    big = th > 2.5
    w[small] = vf[small] * (1.0 + th[small] ** 2 / 6.0)[:, None]
    w[mid] = vf[mid] * (th[mid] / sf[mid])[:, None]
    if np.any(big):
        # near pi the skew part loses precision; recover the axis from the symmetric part
        for k in np.flatnonzero(big):
            B = sym(Rf[k]) - cf[k] * np.eye(3)
            B /= 1.0 - cf[k]
            col = int(np.argmax(np.diag(B)))
            axis = B[:, col] / np.sqrt(B[col, col])
            if axis @ vf[k] < 0:
                axis = -axis
            w[k] = th[k] * axis
    return hat3(w.reshape(v.shape))


def _log_schur(R):
    T, U = scipy.linalg.schur(R, output="real")
    n = R.shape[0]
    L = np.zeros_like(T)
    k = 0
    while k < n:
        if k + 1 < n and abs(T[k + 1, k]) > 1e-300:
            blk = T[k : k + 2, k : k + 2]
            theta = np.arctan2(blk[1, 0] - blk[0, 1], blk[0, 0] + blk[1, 1])
            if abs(theta) > np.pi - CUT_LOCUS_TOL:
                raise CutLocusError("rotation angle at pi: principal logarithm undefined")
            L[k + 1, k] = theta
            L[k, k + 1] = -theta
            k += 2
        else:
            if T[k, k] < 0:
                raise CutLocusError("eigenvalue -1: principal logarithm undefined")
            k += 1
    return skew(U @ L @ U.T)


def logm_rot(R: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm of (a stack of) rotations; result is skew-symmetric."""
    R = _square(R, "R")
    n = R.shape[-1]
    if n == 2:
        return _log2(R)
    if n == 3:
        return _log3(R)
    if R.ndim == 2:
        return _log_schur(R)
    flat = R.reshape(-1, n, n)
    return np.stack([_log_schur(r) for r in flat]).reshape(R.shape)


def log_map(Q1: np.ndarray, Q2: np.ndarray) -> np.ndarray:
    """Skew factor ``log(Q1.T Q2)`` of the Riemannian logarithm at ``Q1``."""
    Q1 = _square(Q1, "Q1")
    Q2 = _square(Q2, "Q2")
    _same_shape(Q1, Q2)
    return logm_rot(np.swapaxes(Q1, -1, -2) @ Q2)


def rotation_angles(R: np.ndarray) -> np.ndarray:
    """Absolute rotation angles of each eigenvalue of ``R`` (shape ``(..., n)``).

    Total on SO(n): defined everywhere, including the cut locus.
    """
    R = _square(R, "R")
    n = R.shape[-1]
    if n == 2:
        th = np.abs(np.arctan2(R[..., 1, 0] - R[..., 0, 1], R[..., 0, 0] + R[..., 1, 1]))
        return np.stack([th, th], axis=-1)
    if n == 3:
        s = 0.5 * np.linalg.norm(vee3(R - np.swapaxes(R, -1, -2)), axis=-1)
        c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
        th = np.arctan2(s, c)
        return np.stack([th, th, np.zeros_like(th)], axis=-1)
    return np.abs(np.angle(np.linalg.eigvals(R)))


def sq_dist_from_identity(R: np.ndarray) -> np.ndarray:
    """Squared geodesic distance ``||log R||_F^2`` computed from eigen-angles.

    Unlike :func:`geodesic_dist` this never raises at the cut locus, where it
    returns the (well-defined) limit value.
    """
    return np.sum(rotation_angles(R) ** 2, axis=-1)


def geodesic_dist(Q1: np.ndarray, Q2: np.ndarray) -> float:
    """Geodesic distance ``||log(Q1.T Q2)||_F``."""
    return np.linalg.norm(log_map(Q1, Q2), axis=(-2, -1))


def canonical_basis(n: int) -> np.ndarray:
    """Orthonormal basis of so(n) as a ``(d, n, n)`` array.

    Index pairs ``a < b`` are taken in lexicographic order, each element holding
    ``+1/sqrt 2`` at ``(a, b)`` and ``-1/sqrt 2`` at ``(b, a)``. For n = 3 the
    middle element is negated to give the conventional basis with
    ``[E1, E2] = E3/sqrt 2`` and cyclic permutations.
    """
    d = lie_dim(n)
    out = np.zeros((d, n, n))
    k = 0
    for a in range(n):
        for b in range(a + 1, n):
            out[k, a, b] = 1.0
            out[k, b, a] = -1.0
            k += 1
    if n == 3:
        out[1] *= -1.0
    return out / np.sqrt(2.0)


def _as_tuple(T, name):
    T = np.asarray(T, dtype=float)
    if T.ndim == 2:
        T = T[None]
    if T.ndim != 3 or T.shape[1] != T.shape[2] or T.shape[0] < 1:
        raise DimensionMismatchError(f"{name} must have shape (N, n, n), got {T.shape}")
    return T


def dist_anchored(ref, est, anchors) -> float:
    """Geodesic distance on the anchored product manifold (anchors must agree)."""
    ref = _as_tuple(ref, "ref")
    est = _as_tuple(est, "est")
    if ref.shape != est.shape:
        raise DimensionMismatchError(f"tuple shapes differ: {ref.shape} vs {est.shape}")
    N = ref.shape[0]
    anchors = sorted(set(int(a) for a in anchors))
    if anchors and (anchors[0] < 0 or anchors[-1] >= N):
        raise AnchoredViolationError(f"anchor index out of range for N={N}")
    for a in anchors:
        if np.max(np.abs(ref[a] - est[a])) > ANCHOR_TOL:
            raise AnchoredViolationError(f"estimate differs from reference at anchor {a}")
    free = np.setdiff1d(np.arange(N), anchors)
    if free.size == 0:
        return 0.0
    logs = logm_rot(np.swapaxes(ref[free], -1, -2) @ est[free])
    return float(np.sqrt(np.sum(logs**2)))


def project_to_so(M: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``M`` in Frobenius norm (SVD with determinant correction).

    When ``det(U V^T) < 0`` the sign flip is applied along the last (smallest)
    singular direction, which also makes ties deterministic.
    """
    M = _square(M, "M")
    U, _, Vt = np.linalg.svd(M)
    det = np.linalg.det(U @ Vt)
    U = U.copy()
    U[..., :, -1] *= np.where(det < 0, -1.0, 1.0)[..., None]
    return U @ Vt


def align_quotient(ref, est, tol: float = 1e-10, max_iter: int = 200):
    """Align ``est`` to ``ref`` modulo a global rotation.

    Returns ``(Q, dist)`` with ``Q`` minimizing ``sum_i ||log(R_i^T Rhat_i Q)||^2``
    and ``dist`` the square root of the minimum. ``Q`` is the Karcher mean of the
    rotations ``Rhat_i^T R_i``, found by the intrinsic-mean fixed-point iteration.
    """
    ref = _as_tuple(ref, "ref")
    est = _as_tuple(est, "est")
    if ref.shape != est.shape:
        raise DimensionMismatchError(f"tuple shapes differ: {ref.shape} vs {est.shape}")
    M = np.swapaxes(est, -1, -2) @ ref  # Rhat_i^T R_i
    Q = project_to_so(M.sum(axis=0))
    best, best_val = Q, np.inf
    for _ in range(max_iter):
        try:
            logs = logm_rot(np.swapaxes(Q, -1, -2)[None] @ M)
        except CutLocusError as exc:
            raise ConvergenceError(
                "Karcher alignment hit the cut locus", best=best, best_value=best_val
            ) from exc
        val = float(np.sum(logs**2))
        if val < best_val:
            best, best_val = Q, val
        step = logs.mean(axis=0)
        if np.linalg.norm(step) < tol:
            return Q, float(np.sqrt(val))
        Q = Q @ _expm_skew(step)
    raise ConvergenceError(
        f"Karcher alignment did not converge in {max_iter} iterations",
        best=best,
        best_value=float(np.sqrt(best_val)),
    )
