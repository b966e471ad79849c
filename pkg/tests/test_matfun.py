import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h2coord import matfun
from h2coord.matfun import LtiSystem, NotStableError

from conftest import random_model
from oracles import dare_fixed_point, impulse_energy, simpson_gram


def test_expm_examples():
    np.testing.assert_array_equal(matfun.expm(np.zeros((2, 2)), 1.0), np.eye(2))
    np.testing.assert_allclose(matfun.expm([[-1.0]], 0.5), [[np.exp(-0.5)]], rtol=1e-14)
    np.testing.assert_allclose(matfun.expm(np.diag([-1.0, 0.3]), 2.0), np.diag(np.exp([-2.0, 0.6])), rtol=1e-13)


def test_expm_rejects_non_square():
    with pytest.raises(ValueError):
        matfun.expm(np.ones((2, 3)))


def test_discretize_pair_scalar():
    Ah, Bh = matfun.discretize_pair([[-1.0]], [[1.0]], 0.5)
    assert Ah[0, 0] == pytest.approx(np.exp(-0.5), rel=1e-14)
    assert Bh[0, 0] == pytest.approx(1 - np.exp(-0.5), rel=1e-14)


def test_discretize_pair_special_cases(rng):
    A = random_model(rng, n=3).A
    B = rng.standard_normal((3, 2))
    Ah, Bh = matfun.discretize_pair(A, np.zeros((3, 2)), 0.7)
    np.testing.assert_allclose(Ah, matfun.expm(A, 0.7), rtol=1e-13)
    assert not Bh.any()
    Ah, Bh = matfun.discretize_pair(np.zeros((3, 3)), B, 0.7)
    np.testing.assert_allclose(Ah, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(Bh, 0.7 * B, rtol=1e-13)
    with pytest.raises(ValueError):
        matfun.discretize_pair(A, B, 0.0)


def test_discretize_pair_first_order_limit(rng):
    A = random_model(rng, n=3).A
    B = rng.standard_normal((3, 1))
    errs = []
    for h in (1e-2, 1e-4):
        _, Bh = matfun.discretize_pair(A, B, h)
        errs.append(np.abs(Bh / h - B).max())
    # error shrinks proportionally to h
    assert errs[1] < errs[0] * 2e-2


def test_sampled_cost_gram_scalar():
    Q, S, R = matfun.sampled_cost_gram([[-1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [1.0]], 0.5)
    e1, e2 = np.exp(-0.5), np.exp(-1.0)
    assert Q[0, 0] == pytest.approx((1 - e2) / 2, rel=1e-13)
    assert S[0, 0] == pytest.approx((1 - e1) - (1 - e2) / 2, rel=1e-12)
    assert R[0, 0] == pytest.approx(0.5 + 0.5 - 2 * (1 - e1) + (1 - e2) / 2, rel=1e-13)
    assert (Q[0, 0], S[0, 0], R[0, 0]) == pytest.approx((0.3160603, 0.0774090, 0.5291216), abs=1e-7)


def test_sampled_cost_gram_zero_weight_and_small_h(rng):
    md = random_model(rng)
    Q, S, R = matfun.sampled_cost_gram(md.A, md.Bu, 0 * md.Cz, 0 * md.Dzu, 0.3)
    assert not (Q.any() or S.any() or R.any())
    h = 1e-6
    Q, S, R = matfun.sampled_cost_gram(md.A, md.Bu, md.Cz, md.Dzu, h)
    np.testing.assert_allclose(Q / h, md.Cz.T @ md.Cz, rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("seed", range(6))
def test_sampled_cost_gram_matches_simpson(seed):
    rng = np.random.default_rng(100 + seed)
    md = random_model(rng)
    h = rng.uniform(0.05, 1.5)
    exact = matfun.sampled_cost_gram(md.A, md.Bu, md.Cz, md.Dzu, h)
    quad = simpson_gram(md.A, md.Bu, md.Cz, md.Dzu, h)
    for a, b in zip(exact, quad):
        np.testing.assert_allclose(a, b, atol=1e-8 * max(1.0, np.abs(b).max()))
    G = np.block([[exact[0], exact[1]], [exact[1].T, exact[2]]])
    np.testing.assert_allclose(G, G.T, atol=1e-14)
    assert np.linalg.eigvalsh(G).min() > -1e-12


def test_lyap_examples():
    np.testing.assert_allclose(matfun.lyap_continuous([[-1.0]], [[1.0]]), [[0.5]], rtol=1e-14)
    assert not matfun.lyap_continuous(-np.eye(2), np.zeros((2, 2))).any()
    np.testing.assert_allclose(matfun.lyap_continuous(np.diag([-1.0, -2.0]), np.eye(2)), np.diag([0.5, 0.25]),
                               rtol=1e-14)


def test_lyap_not_hurwitz_reports_eigenvalue():
    with pytest.raises(NotStableError) as exc:
        matfun.lyap_continuous([[1.0]], [[1.0]])
    assert exc.value.eigenvalue == pytest.approx(1.0)


def test_lyap_residual_random_sweep():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        M = rng.standard_normal((n, n))
        A = M - (np.linalg.eigvals(M).real.max() + rng.uniform(0.05, 2)) * np.eye(n)
        L = rng.standard_normal((n, n))
        Q = L @ L.T
        X = matfun.lyap_continuous(A, Q)
        res = np.linalg.norm(A.T @ X + X @ A + Q)
        assert res <= 1e-10 * (np.linalg.norm(A) * np.linalg.norm(X) + np.linalg.norm(Q))


def test_care_scalar_s1(s1):
    X, F = matfun.care(s1.A, s1.Bu, s1.Cz, s1.Dzu)
    assert X[0, 0] == pytest.approx(np.sqrt(2) - 1, abs=1e-14)
    assert F[0, 0] == pytest.approx(1 - np.sqrt(2), abs=1e-14)


def test_care_zero_state_cost():
    D = np.array([[0.6], [0.8]])
    X, F = matfun.care([[-2.0]], [[1.0]], np.zeros((2, 1)), D)
    assert np.allclose(X, 0) and np.allclose(F, 0)


def test_care_requires_normalized_feedthrough():
    with pytest.raises(matfun.RiccatiError):
        matfun.care([[-1.0]], [[1.0]], [[1.0], [0.0]], [[0.0], [2.0]])


def test_care_keeps_cross_term():
    # cross term Dzu'Cz != 0 changes the answer; compare with a direct Hamiltonian solve
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    B = np.array([[1.0], [1.0]])
    C = np.array([[1.0, 0.0], [0.0, 1.0], [0.3, -0.4]])
    D = np.array([[0.0], [0.0], [1.0]])
    X, F = matfun.care(A, B, C, D)
    L = X @ B + C.T @ D
    np.testing.assert_allclose(A.T @ X + X @ A + C.T @ C - L @ L.T, 0, atol=1e-12)
    X0, _ = matfun.care(A, B, C * np.array([[1], [1], [0]]), D)
    assert np.abs(X - X0).max() > 1e-3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_care_sandwich_and_stability(seed):
    md = random_model(np.random.default_rng(seed))
    X, F = matfun.care(md.A, md.Bu, md.Cz, md.Dzu)
    Xbar = matfun.lyap_continuous(md.A, md.Cz.T @ md.Cz)
    assert np.linalg.eigvalsh(X).min() >= -1e-10
    assert np.linalg.eigvalsh(Xbar - X).min() >= -1e-10 * max(1, np.abs(Xbar).max())
    assert np.linalg.eigvals(md.A + md.Bu @ F).real.max() < 0


def test_dare_scalar_matches_fixed_point(s1):
    Ah, Bh = matfun.discretize_pair(s1.A, s1.Bu, 0.5)
    Q, S, R = matfun.sampled_cost_gram(s1.A, s1.Bu, s1.Cz, s1.Dzu, 0.5)
    X, F = matfun.dare(Ah, Bh, Q, S, R)
    assert X[0, 0] == pytest.approx(0.4167, abs=1e-3)
    np.testing.assert_allclose(X, dare_fixed_point(Ah, Bh, Q, S, R), atol=1e-12)
    assert abs(Ah + Bh @ F)[0, 0] < 1


def test_dare_zero_cost(rng):
    md = random_model(rng)
    Ah, Bh = matfun.discretize_pair(md.A, md.Bu, 0.4)
    m, n = md.m, md.n
    X, F = matfun.dare(Ah, Bh, np.zeros((n, n)), np.zeros((n, m)), np.eye(m))
    np.testing.assert_allclose(X, 0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.05, 0.5, 2.0]))
def test_dare_random_stabilizing(seed, h):
    md = random_model(np.random.default_rng(seed))
    Ah, Bh = matfun.discretize_pair(md.A, md.Bu, h)
    Q, S, R = matfun.sampled_cost_gram(md.A, md.Bu, md.Cz, md.Dzu, h)
    X, F = matfun.dare(Ah, Bh, Q, S, R)
    assert np.abs(np.linalg.eigvals(Ah + Bh @ F)).max() < 1
    assert np.linalg.eigvalsh(X).min() >= -1e-10
    np.testing.assert_allclose(X, dare_fixed_point(Ah, Bh, Q, S, R), atol=1e-8 * max(1, np.abs(X).max()))


def test_dare_singular_R():
    with pytest.raises(matfun.RiccatiError):
        matfun.dare([[0.5]], [[1.0]], [[1.0]], [[0.0]], [[0.0]])


def test_h2_examples():
    assert matfun.h2_norm_exact(LtiSystem([[-1.0]], [[1.0]], [[1.0]], [[0.0]])) == pytest.approx(np.sqrt(0.5), rel=1e-14)
    assert matfun.h2_norm_exact(LtiSystem([[-1.0]], [[1.0]], [[0.0]])) == 0.0
    with pytest.raises(ValueError):
        matfun.h2_norm_exact(LtiSystem([[-1.0]], [[1.0]], [[1.0]], [[1.0]]))
    with pytest.raises(NotStableError):
        matfun.h2_norm_exact(LtiSystem([[0.5]], [[1.0]], [[1.0]]))


def test_h2_block_diagonal_root_sum_square(rng):
    a, b = random_model(rng), random_model(rng)
    s1 = LtiSystem(a.A, a.Bw, a.Cz)
    s2 = LtiSystem(b.A, b.Bw, b.Cz)
    from scipy.linalg import block_diag
    s = LtiSystem(block_diag(a.A, b.A), block_diag(a.Bw, b.Bw), block_diag(a.Cz, b.Cz))
    assert matfun.h2_norm_exact(s) == pytest.approx(np.hypot(matfun.h2_norm_exact(s1), matfun.h2_norm_exact(s2)),
                                                    rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_h2_matches_impulse_energy(seed):
    md = random_model(np.random.default_rng(200 + seed), n=3)
    exact = matfun.h2_norm_exact(LtiSystem(md.A, md.Bw, md.Cz))
    energy = impulse_energy(md.A, md.Bw, md.Cz, T=80.0, dt=2e-3)
    assert np.sqrt(energy) == pytest.approx(exact, rel=1e-3)
