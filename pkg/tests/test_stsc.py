import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from tadesign.evaluation import adjusted_rand_index
from tadesign.kernel import SimilarityMatrix
from tadesign.model import ConvergenceError, DegenerateInputError, KernelParams
from tadesign.stsc import (
    ClusterCandidate,
    DegenerateEmbeddingError,
    RotationState,
    StscConfig,
    alignment_cost,
    assign_labels,
    cost_gradient,
    givens_planes,
    normalize_affinity,
    optimize_rotation,
    rotation_matrix,
    run_stsc,
    select_candidate,
    top_eigenvectors,
)


def indicator(labels, c, signs=None):
    x = np.zeros((len(labels), c))
    x[np.arange(len(labels)), labels] = 1.0 if signs is None else signs
    return x


def orthonormal_indicator(labels, c):
    x = indicator(labels, c)
    return x / np.sqrt(x.sum(axis=0))


def block_similarity(sizes, inside=1.0, outside=0.0):
    m = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    s = np.where(labels[:, None] == labels[None, :], inside, outside)
    np.fill_diagonal(s, 0.0)
    return s, labels


def random_orthonormal(rng, m, c):
    q, _ = np.linalg.qr(rng.normal(size=(m, c)))
    return q


def central_difference(x, state, h=1e-6):
    grad = np.empty(state.theta.size)
    for k in range(state.theta.size):
        tp, tm = state.theta.copy(), state.theta.copy()
        tp[k] += h
        tm[k] -= h
        grad[k] = (
            alignment_cost(x @ rotation_matrix(RotationState(state.c, tp)))
            - alignment_cost(x @ rotation_matrix(RotationState(state.c, tm)))
        ) / (2 * h)
    return grad


# ---------------------------------------------------------------- normalization


def test_normalize_unit_degrees():
    s = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(normalize_affinity(s), s)


def test_normalize_constant_degree():
    s = np.array([[0, 0.2, 0.3, 0.5], [0.2, 0, 0.5, 0.3], [0.3, 0.5, 0, 0.2], [0.5, 0.3, 0.2, 0]])
    np.testing.assert_allclose(normalize_affinity(s), s / 1.0, rtol=1e-15)
    np.testing.assert_allclose(normalize_affinity(2 * s), s, rtol=1e-15)


def test_normalize_block_diagonal_leading_eigenvalues():
    s, _ = block_similarity([2, 2])
    s[0, 1] = s[1, 0] = 0.5
    n = normalize_affinity(s)
    assert np.all(n[:2, 2:] == 0)
    w = np.sort(np.linalg.eigvals(n).real)[::-1]
    np.testing.assert_allclose(w[:2], [1.0, 1.0], atol=1e-12)


def test_normalize_rejects_zero_row():
    s = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], float)
    with pytest.raises(DegenerateInputError):
        normalize_affinity(s)


def test_normalized_spectrum_matches_random_walk_form(rng):
    for _ in range(20):
        a = rng.uniform(0.1, 1.0, (20, 20))
        s = np.triu(a, 1) + np.triu(a, 1).T
        ours = np.sort(np.linalg.eigvalsh(normalize_affinity(s)))
        theirs = np.sort(scipy.linalg.eigvals(s @ np.diag(1.0 / s.sum(axis=1))).real)
        np.testing.assert_allclose(ours, theirs, atol=1e-8)


# ---------------------------------------------------------------- eigenvectors


def test_top_eigenvectors_identity():
    emb = top_eigenvectors(np.eye(5), 2)
    np.testing.assert_allclose(emb.eigenvalues, [1.0, 1.0])
    np.testing.assert_allclose(emb.x.T @ emb.x, np.eye(2), atol=1e-12)
    assert np.max(np.abs(np.eye(5) @ emb.x - emb.x * emb.eigenvalues)) <= 1e-8


def test_top_eigenvectors_block_indicators():
    s, labels = block_similarity([3, 4], inside=0.5)
    # constant degree within each block: 0.5*(size-1); make both degrees equal
    s[:3, :3] = np.where(np.eye(3), 0, 0.75)
    emb = top_eigenvectors(normalize_affinity(s), 2)
    for k in range(2):
        col = emb.x[:, k]
        for b in range(2):
            vals = col[labels == b]
            assert np.ptp(vals) < 1e-10


def test_top_eigenvectors_match_dense_oracle(rng):
    a = rng.normal(size=(10, 10))
    n = (a + a.T) / 2
    emb = top_eigenvectors(n, 10)
    w, v = scipy.linalg.eig(n)
    order = np.argsort(w.real)[::-1]
    w, v = w.real[order], v.real[:, order]
    np.testing.assert_allclose(emb.eigenvalues, w, atol=1e-8)
    for k in range(10):
        ref = v[:, k] / np.linalg.norm(v[:, k])
        ref = ref * np.sign(ref[np.argmax(np.abs(ref))])
        np.testing.assert_allclose(emb.x[:, k], ref, atol=1e-8)


def test_top_eigenvectors_contract(rng):
    a = rng.normal(size=(30, 30))
    n = (a + a.T) / 2
    emb = top_eigenvectors(n, 6)
    assert np.all(np.diff(emb.eigenvalues) <= 0)
    np.testing.assert_allclose(emb.x.T @ emb.x, np.eye(6), atol=1e-8)
    assert np.max(np.linalg.norm(n @ emb.x - emb.x * emb.eigenvalues, axis=0)) <= 1e-8
    pivots = emb.x[np.argmax(np.abs(emb.x), axis=0), np.arange(6)]
    assert np.all(pivots > 0)


def test_top_eigenvectors_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        top_eigenvectors(np.array([[0.0, 1.0], [0.5, 0.0]]), 1)


# ---------------------------------------------------------------- rotations


def test_planes_lexicographic():
    assert givens_planes(3) == ((0, 1), (0, 2), (1, 2))
    assert len(givens_planes(6)) == 15


def test_zero_angles_identity():
    assert np.array_equal(rotation_matrix(RotationState(4)), np.eye(4))


def test_quarter_turn():
    r = rotation_matrix(RotationState(2, [math.pi / 2]))
    np.testing.assert_allclose(r, [[0, -1], [1, 0]], atol=1e-16)


def test_rotation_is_product_of_givens(rng):
    theta = rng.uniform(-math.pi, math.pi, 3)
    ref = np.eye(3)
    for (i, j), t in zip(givens_planes(3), theta):
        g = np.eye(3)
        g[i, i] = g[j, j] = math.cos(t)
        g[i, j], g[j, i] = -math.sin(t), math.sin(t)
        ref = ref @ g
    r = rotation_matrix(RotationState(3, theta))
    np.testing.assert_allclose(r, ref, atol=1e-14)
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)


def test_rotation_state_validates_length():
    with pytest.raises(ValueError):
        RotationState(3, [0.1])


def test_extended_state_pads_identity(rng):
    st3 = RotationState(3, rng.uniform(-1, 1, 3))
    st5 = st3.extended(5)
    r5 = rotation_matrix(st5)
    np.testing.assert_allclose(r5[:3, :3], rotation_matrix(st3), atol=1e-15)
    np.testing.assert_allclose(r5[3:, 3:], np.eye(2))
    assert np.all(r5[:3, 3:] == 0) and np.all(r5[3:, :3] == 0)


def test_rotation_preserves_orthonormal_columns(rng):
    x = random_orthonormal(rng, 40, 5)
    z = x @ rotation_matrix(RotationState(5, rng.uniform(-3, 3, 10)))
    np.testing.assert_allclose(z.T @ z, np.eye(5), atol=1e-8)


# ---------------------------------------------------------------- cost


def test_cost_minimum_and_maximum():
    labels = np.array([0, 1, 2, 1, 0])
    assert alignment_cost(indicator(labels, 3, signs=[2.0, -1.0, 0.5, 3.0, -4.0])) == 5.0
    assert alignment_cost(np.ones((5, 3))) == 15.0


def test_cost_hand_example():
    assert alignment_cost(np.array([[2.0, 1.0], [1.0, 3.0]])) == pytest.approx(2.361111111111111, rel=1e-15)


def test_cost_uses_absolute_max():
    assert alignment_cost(np.array([[-3.0, 1.0]])) == pytest.approx(1 + 1 / 9)


def test_cost_zero_row():
    with pytest.raises(DegenerateEmbeddingError):
        alignment_cost(np.array([[1.0, 0.0], [0.0, 0.0]]))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 30), c=st.integers(1, 8))
def test_cost_bounds_property(seed, m, c):
    z = np.random.default_rng(seed).normal(size=(m, c))
    j = alignment_cost(z)
    assert m <= j <= m * c


# ---------------------------------------------------------------- gradient


def test_gradient_matches_finite_differences(rng):
    x = random_orthonormal(rng, 4, 2)
    state = RotationState(2, rng.uniform(-math.pi, math.pi, 1))
    np.testing.assert_allclose(cost_gradient(x, state), central_difference(x, state), rtol=1e-5)


def test_gradient_many_planes(rng):
    x = random_orthonormal(rng, 25, 5)
    state = RotationState(5, rng.uniform(-math.pi, math.pi, 10))
    np.testing.assert_allclose(cost_gradient(x, state), central_difference(x, state), rtol=1e-5, atol=1e-7)


def test_gradient_zero_at_signed_indicator(rng):
    labels = rng.integers(0, 4, 30)
    labels[:4] = np.arange(4)
    x = indicator(labels, 4, signs=rng.choice([-1.0, 1.0], 30) * rng.uniform(0.5, 2, 30))
    assert np.array_equal(cost_gradient(x, RotationState(4)), np.zeros(6))


def test_gradient_small_at_optimum(rng):
    labels = np.repeat(np.arange(3), 8)
    x = orthonormal_indicator(labels, 3) @ rotation_matrix(RotationState(3, [0.3, -0.4, 0.2])).T
    cfg = StscConfig(c_min=2, c_max=3, rel_tol=1e-14, max_iters=2000)
    state, j = optimize_rotation(x, RotationState(3), cfg)
    assert abs(j - 24) < 1e-9
    assert np.linalg.norm(cost_gradient(x, state)) <= 1e-6


# ---------------------------------------------------------------- optimization


def test_optimize_indicator_is_noop():
    labels = np.repeat(np.arange(3), 5)
    x = orthonormal_indicator(labels, 3)
    state, j = optimize_rotation(x, RotationState(3), StscConfig())
    assert np.array_equal(state.theta, np.zeros(3))
    assert j == 15.0


def test_optimize_recovers_planted_rotation(rng):
    labels = np.repeat(np.arange(4), [6, 7, 5, 8])
    truth = orthonormal_indicator(labels, 4)
    r0 = rotation_matrix(RotationState(4, rng.uniform(-0.6, 0.6, 6)))
    x = truth @ r0
    cfg = StscConfig(c_min=2, c_max=4, rel_tol=1e-15, max_iters=5000)
    state, j = optimize_rotation(x, RotationState(4), cfg)
    assert abs(j - len(labels)) <= 1e-6
    z = x @ rotation_matrix(state)
    assert adjusted_rand_index(assign_labels(z), labels) == 1.0
    # z equals the indicator up to column permutation and sign
    perm = [int(np.argmax(np.abs(z[labels == k]).sum(axis=0))) for k in range(4)]
    assert sorted(perm) == [0, 1, 2, 3]
    aligned = np.abs(z[:, perm])
    np.testing.assert_allclose(aligned, truth, atol=1e-3)


def test_optimize_zero_budget(rng):
    x = random_orthonormal(rng, 10, 3)
    init = RotationState(3, [0.1, 0.2, 0.3])
    state, j = optimize_rotation(x, init, StscConfig(max_iters=0))
    assert state is init
    assert j == alignment_cost(x @ rotation_matrix(init))


def test_optimize_never_increases_cost(rng):
    for _ in range(10):
        x = random_orthonormal(rng, 30, 4)
        init = RotationState(4, rng.uniform(-1, 1, 6))
        _, j = optimize_rotation(x, init, StscConfig())
        assert j <= alignment_cost(x @ rotation_matrix(init))


def test_optimize_reports_stuck_first_step(rng):
    x = random_orthonormal(rng, 30, 3)
    cfg = StscConfig(step_init=1e-300, step_halvings=0)
    with pytest.raises(ConvergenceError) as exc:
        optimize_rotation(x, RotationState(3), cfg)
    assert exc.value.diagnostics["c"] == 3
    assert exc.value.diagnostics["grad_norm"] > 0


# ---------------------------------------------------------------- labels and selection


def test_assign_labels_rules():
    z = np.array([[0.1, -0.9], [0.5, 0.5], [-2.0, 1.0]])
    assert assign_labels(z).tolist() == [1, 0, 0]


def _cand(c, q):
    return ClusterCandidate(c, 1.0, q, np.zeros(1), np.zeros((1, c)), np.zeros(0))


def test_select_prefers_larger_c_on_near_tie():
    cands = [_cand(2, 0.95), _cand(3, 0.9995), _cand(4, 0.999), _cand(5, 0.97)]
    assert select_candidate(cands, 1e-3).c == 4
    assert select_candidate(cands, 0.0).c == 3


def test_config_validation():
    with pytest.raises(ValueError):
        StscConfig(c_min=1)
    with pytest.raises(ValueError):
        StscConfig(c_min=5, c_max=4)
    with pytest.raises(ValueError):
        run_stsc(np.ones((3, 3)) - np.eye(3), StscConfig(c_max=4))


def noisy_blocks(rng, sizes, inside=0.9, outside=0.4, noise=0.02):
    s, labels = block_similarity(sizes, inside, outside)
    e = rng.uniform(-noise, noise, s.shape)
    s = s + np.triu(e, 1) + np.triu(e, 1).T
    np.fill_diagonal(s, 0.0)
    return s, labels


def test_run_stsc_three_planted_blocks(rng):
    s, labels = noisy_blocks(rng, [10, 14, 12])
    sel, cands = run_stsc(SimilarityMatrix(s, KernelParams()), StscConfig(c_min=2, c_max=6))
    assert sel.c == 3
    assert adjusted_rand_index(sel.labels, labels) == 1.0
    assert [c.c for c in cands] == [2, 3, 4, 5, 6]
    for cand in cands:
        assert cand.j_min >= len(labels) - 1e-9
        assert 0 < cand.quality <= 1


def test_run_stsc_forced_count(rng):
    s, _ = noisy_blocks(rng, [10, 14, 12])
    sel, cands = run_stsc(s, StscConfig(c_min=4, c_max=4))
    assert sel.c == 4 and len(cands) == 1


def test_run_stsc_independent_mode(rng):
    s, labels = noisy_blocks(rng, [9, 9, 9, 9])
    sel, _ = run_stsc(s, StscConfig(c_min=2, c_max=6, warm_start=False))
    assert sel.c == 4
    assert adjusted_rand_index(sel.labels, labels) == 1.0


def test_run_stsc_deterministic(rng):
    s, _ = noisy_blocks(rng, [8, 12, 10])
    a, ca = run_stsc(s)
    b, cb = run_stsc(s)
    assert a.c == b.c
    assert [c.j_min for c in ca] == [c.j_min for c in cb]
    assert np.array_equal(a.labels, b.labels)
