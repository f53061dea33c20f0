import numpy as np
import pytest

from rotsync.errors import DimensionMismatchError, GraphError, InvalidSourceError
from rotsync.graphcore import (
    MeasurementGraph,
    anchored_diag,
    build_laplacian,
    connected_components,
    ectd_quad,
    fiedler_pair,
    fiedler_value,
    is_connected,
    laplacian_from_weights,
    mask_anchors,
    random_walk_pinv,
    spectral_kernel,
    trace_pinv,
)
from rotsync.noise import NoiseModel, bessel_I

from conftest import random_weighted_graph


def complete_pairs(N):
    iu, ju = np.triu_indices(N, 1)
    return np.stack([iu, ju], 1)


def complete_laplacian(N, w=1.0):
    P = complete_pairs(N)
    return laplacian_from_weights(N, P, np.full(len(P), w))


def check_moore_penrose(A, P, tol=1e-8):
    assert np.allclose(A @ P @ A, A, atol=tol)
    assert np.allclose(P @ A @ P, P, atol=tol)
    assert np.allclose((A @ P).T, A @ P, atol=tol)
    assert np.allclose((P @ A).T, P @ A, atol=tol)


# --------------------------------------------------------------------------
# Graph validation


def test_graph_rejects_self_loop():
    m = NoiseModel.langevin(3, 1.0)
    with pytest.raises(GraphError):
        MeasurementGraph(3, ((1, 1, m),), (), 3)


def test_graph_rejects_duplicate_either_order():
    m = NoiseModel.langevin(3, 1.0)
    with pytest.raises(GraphError):
        MeasurementGraph(3, ((0, 1, m), (1, 0, m)), (), 3)


def test_graph_rejects_mixed_dimension():
    with pytest.raises(DimensionMismatchError):
        MeasurementGraph(3, ((0, 1, NoiseModel.langevin(2, 1.0)),), (), 3)


def test_graph_rejects_out_of_range():
    m = NoiseModel.langevin(3, 1.0)
    with pytest.raises(GraphError):
        MeasurementGraph(3, ((0, 3, m),), (), 3)
    with pytest.raises(GraphError):
        MeasurementGraph(3, ((0, 1, m),), (5,), 3)


def test_graph_normalizes_order():
    m = NoiseModel.langevin(3, 1.0)
    g = MeasurementGraph(3, ((2, 0, m),), (2, 0), 3)
    assert g.edges == ((0, 2, m),) and g.anchors == (0, 2)


# --------------------------------------------------------------------------
# Laplacians


def test_triangle_laplacian():
    L = complete_laplacian(3)
    assert np.array_equal(L.matrix, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


def test_single_edge_langevin_laplacian():
    g = MeasurementGraph(2, ((0, 1, NoiseModel.langevin(2, 1.0)),), (), 2)
    w = bessel_I(1, 2.0) / bessel_I(0, 2.0)
    assert np.allclose(build_laplacian(g).matrix, w * np.array([[1, -1], [-1, 1]]), rtol=1e-13)


def test_empty_laplacian():
    g = MeasurementGraph(4, (), (), 3)
    assert np.array_equal(build_laplacian(g).matrix, np.zeros((4, 4)))


def test_laplacian_structure(rng):
    for _ in range(20):
        N = int(rng.integers(2, 9))
        pairs, w = random_weighted_graph(rng, N)
        L = laplacian_from_weights(N, pairs, w).matrix
        assert np.allclose(L.sum(axis=1), 0, atol=1e-12)
        assert np.array_equal(L, L.T)
        assert np.all(L - np.diag(np.diag(L)) <= 0)
        assert np.linalg.eigvalsh(L).min() > -1e-12


def test_mask_examples():
    L = complete_laplacian(3)
    assert np.array_equal(mask_anchors(L, [0, 1, 2]).matrix, np.zeros((3, 3)))
    assert np.array_equal(mask_anchors(L, []).matrix, L.matrix)
    # independent path: build the block by hand
    expected = np.zeros((3, 3))
    expected[1:, 1:] = [[2, -1], [-1, 2]]
    assert np.array_equal(mask_anchors(L, [0]).matrix, expected)
    with pytest.raises(GraphError):
        mask_anchors(L, [3])


def test_masked_block_definiteness(rng):
    pairs = np.array([[0, 1], [2, 3]])
    L = laplacian_from_weights(4, pairs, [1.0, 2.0])
    free = lambda A: [i for i in range(4) if i not in A]  # noqa: E731
    M = mask_anchors(L, [0]).matrix[np.ix_(free([0]), free([0]))]
    assert np.linalg.eigvalsh(M).min() < 1e-12
    M = mask_anchors(L, [0, 3]).matrix[np.ix_(free([0, 3]), free([0, 3]))]
    assert np.linalg.eigvalsh(M).min() > 0.1


# --------------------------------------------------------------------------
# Spectral kernel


@pytest.mark.parametrize("N, w", [(4, 1.0), (7, 2.5)])
def test_complete_pinv_closed_form(N, w):
    L = complete_laplacian(N, w)
    k = spectral_kernel(L)
    expected = (np.eye(N) - np.ones((N, N)) / N) / (w * N)
    assert np.allclose(k.pinv, expected, atol=1e-12)
    check_moore_penrose(L.matrix, k.pinv)
    assert np.allclose(k.eigenvalues[1:], w * N, rtol=1e-12)
    assert trace_pinv(k) == pytest.approx((N - 1) / (w * N), rel=1e-12)


def test_connected_kernel_has_ones_nullvector(rng):
    pairs, w = random_weighted_graph(rng, 8)
    k = spectral_kernel(laplacian_from_weights(8, pairs, w))
    assert k.nullity == 1
    v = k.eigenvectors[:, 0]
    assert np.allclose(np.abs(v), 1 / np.sqrt(8), atol=1e-10)


def test_kernel_reconstruction_and_mp(rng):
    for _ in range(20):
        N = int(rng.integers(2, 9))
        pairs, w = random_weighted_graph(rng, N, connected=bool(rng.random() < 0.5))
        L = laplacian_from_weights(N, pairs, w)
        for source in (L, mask_anchors(L, rng.choice(N, size=int(rng.integers(1, N)), replace=False))):
            k = spectral_kernel(source)
            A = source.matrix
            if np.linalg.norm(A) > 0:
                assert np.linalg.norm(k.matrix() - A) / np.linalg.norm(A) < 1e-10
            check_moore_penrose(A, k.pinv)


def test_kernel_nullity_counts(rng):
    # two components plus an isolated node
    pairs = np.array([[0, 1], [1, 2], [3, 4]])
    L = laplacian_from_weights(6, pairs, np.ones(3))
    assert spectral_kernel(L).nullity == 3
    assert len(np.unique(connected_components(L))) == 3
    assert not is_connected(L)
    # anchors {0}: component {3,4} and node 5 stay free -> 1 + 1 null directions, plus the anchor row
    assert spectral_kernel(mask_anchors(L, [0])).nullity == 3


def test_path_anchored_inverse():
    L = laplacian_from_weights(2, [[0, 1]], [3.0])
    k = spectral_kernel(mask_anchors(L, [0]))
    assert anchored_diag(k, 1) == pytest.approx(1 / 3.0, rel=1e-14)
    assert anchored_diag(k, 0) == 0.0
    assert trace_pinv(k) == pytest.approx(1 / 3.0, rel=1e-14)


def test_star_anchored_center():
    w = 2.0
    L = laplacian_from_weights(5, [[0, i] for i in range(1, 5)], np.full(4, w))
    k = spectral_kernel(mask_anchors(L, [0]))
    assert [anchored_diag(k, i) for i in range(1, 5)] == pytest.approx([1 / w] * 4, rel=1e-13)


def test_kernel_size_limit(monkeypatch):
    import rotsync.graphcore as gc

    monkeypatch.setattr(gc, "MAX_DENSE_NODES", 3)
    with pytest.raises(GraphError):
        spectral_kernel(complete_laplacian(4))


# --------------------------------------------------------------------------
# Fiedler value and ECTD


def test_fiedler_examples():
    assert fiedler_value(spectral_kernel(complete_laplacian(6, 1.5))) == pytest.approx(9.0, rel=1e-12)
    disconnected = laplacian_from_weights(4, [[0, 1], [2, 3]], [1.0, 1.0])
    assert fiedler_value(spectral_kernel(disconnected)) == pytest.approx(0.0, abs=1e-12)
    path = laplacian_from_weights(3, [[0, 1], [1, 2]], [1.0, 1.0])
    assert fiedler_value(spectral_kernel(path)) == pytest.approx(1.0, rel=1e-12)
    lam, v = fiedler_pair(spectral_kernel(path))
    assert np.allclose(path.matrix @ v, lam * v, atol=1e-12)


def test_fiedler_rejects_masked():
    with pytest.raises(InvalidSourceError):
        fiedler_value(spectral_kernel(mask_anchors(complete_laplacian(3), [0])))


def test_ectd_examples():
    N, w = 6, 2.0
    k = spectral_kernel(complete_laplacian(N, w))
    for i, j in [(0, 1), (2, 5)]:
        assert ectd_quad(k, i, j) == pytest.approx(2 / (w * N), rel=1e-12)
    path = spectral_kernel(laplacian_from_weights(3, [[0, 1], [1, 2]], [1.0, 1.0]))
    assert ectd_quad(path, 0, 2) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(GraphError):
        ectd_quad(path, 1, 1)
    with pytest.raises(GraphError):
        ectd_quad(path, 0, 7)


def test_ectd_series_resistances():
    r = np.array([0.5, 2.0, 1.25])
    L = laplacian_from_weights(4, [[0, 1], [1, 2], [2, 3]], 1 / r)
    assert ectd_quad(spectral_kernel(L), 0, 3) == pytest.approx(r.sum(), rel=1e-12)


def test_ectd_metric_and_anchor_equivalence(rng):
    for _ in range(30):
        N = int(rng.integers(3, 9))
        pairs, w = random_weighted_graph(rng, N)
        L = laplacian_from_weights(N, pairs, w)
        k = spectral_kernel(L)
        D = np.array([[0.0 if i == j else ectd_quad(k, i, j) for j in range(N)] for i in range(N)])
        assert np.allclose(D, D.T, atol=1e-14)
        # effective resistance is a metric (squared ECTD is)
        R = D
        for i, j, l in rng.integers(0, N, size=(20, 3)):
            assert R[i, l] <= R[i, j] + R[j, l] + 1e-10
        i, j = rng.choice(N, size=2, replace=False)
        ka = spectral_kernel(mask_anchors(L, [j]))
        # brute-force: invert the reduced Laplacian with node j removed
        keep = [v for v in range(N) if v != j]
        brute = np.linalg.inv(L.matrix[np.ix_(keep, keep)])[keep.index(i), keep.index(i)]
        assert ectd_quad(k, i, j) == pytest.approx(anchored_diag(ka, i), abs=1e-8)
        assert anchored_diag(ka, i) == pytest.approx(brute, abs=1e-8)


def test_anchored_diag_requires_masked():
    with pytest.raises(InvalidSourceError):
        anchored_diag(spectral_kernel(complete_laplacian(3)), 1)


def test_random_walk_identity(rng):
    for _ in range(50):
        N = int(rng.integers(2, 9))
        pairs, w = random_weighted_graph(rng, N)
        L = laplacian_from_weights(N, pairs, w)
        A = sorted(rng.choice(N, size=int(rng.integers(1, N)), replace=False).tolist())
        LA_pinv = spectral_kernel(mask_anchors(L, A)).pinv
        assert np.allclose(random_walk_pinv(L, A), LA_pinv, atol=1e-8)
        # expected visits of an absorbing chain, solved directly
        deg = np.diag(L.matrix)
        P = (np.diag(deg) - L.matrix) / deg[:, None]
        free = [v for v in range(N) if v not in A]
        visits = np.linalg.solve(np.eye(len(free)) - P[np.ix_(free, free)], np.eye(len(free)))
        assert np.allclose(visits / deg[free][None, :], LA_pinv[np.ix_(free, free)], atol=1e-8)


def test_rayleigh_monotonicity(rng):
    for _ in range(30):
        N = int(rng.integers(3, 9))
        pairs, w = random_weighted_graph(rng, N)
        L = laplacian_from_weights(N, pairs, w)
        k = spectral_kernel(L)
        w2 = w.copy()
        w2[rng.integers(len(w))] *= rng.uniform(1.0, 3.0)
        k2 = spectral_kernel(laplacian_from_weights(N, pairs, w2))
        assert trace_pinv(k2) <= trace_pinv(k) + 1e-10
        i, j = rng.choice(N, size=2, replace=False)
        assert ectd_quad(k2, i, j) <= ectd_quad(k, i, j) + 1e-10
        # adding a missing edge
        present = {tuple(p) for p in pairs.tolist()}
        missing = [(a, b) for a in range(N) for b in range(a + 1, N) if (a, b) not in present]
        if missing:
            extra = np.vstack([pairs, missing[rng.integers(len(missing))]])
            k3 = spectral_kernel(laplacian_from_weights(N, extra, np.append(w, 0.7)))
            assert trace_pinv(k3) <= trace_pinv(k) + 1e-10
            assert ectd_quad(k3, i, j) <= ectd_quad(k, i, j) + 1e-10


def test_erdos_renyi_trace(rng):
    N, q = 500, 0.6
    iu, ju = np.triu_indices(N, 1)
    keep = rng.random(len(iu)) < q
    L = laplacian_from_weights(N, np.stack([iu[keep], ju[keep]], 1), np.ones(keep.sum()))
    assert trace_pinv(spectral_kernel(L)) == pytest.approx(1 / q, rel=0.05)
