import itertools
import math

import numpy as np
import pytest

from smiselect.exceptions import NumericalDegeneracyError
from smiselect.kernel import SimilarityKernel
from smiselect.smi import (SelectionState, SmiKind, commit, eval_flmi, eval_gcmi, eval_logdmi,
                           evaluate, marginal_gain)

from conftest import random_kernel

KINDS = list(SmiKind)


def logdmi_oracle(S, K, eps):
    """Mutual information via slogdet and an explicit inverse."""
    S = list(S)
    A = K.ground_ground[np.ix_(S, S)] + eps * np.eye(len(S))
    C = K.ground_target[S]
    Tinv = np.linalg.inv(K.target_target + eps * np.eye(K.n_target))
    return np.linalg.slogdet(A)[1] - np.linalg.slogdet(A - C @ Tinv @ C.T)[1]


def flmi_oracle(S, K):
    if not S:
        return 0.0
    s = K.ground_target
    return (sum(max(s[i, t] for i in S) for t in range(K.n_target))
            + sum(max(s[i, t] for t in range(K.n_target)) for i in S))


def test_gcmi_examples():
    K = SimilarityKernel.from_matrices([[0.5], [0.25], [0.9]], [[1.0]])
    assert eval_gcmi([], K) == 0.0
    assert eval_gcmi([0, 1], K) == 1.5
    K2 = SimilarityKernel.from_matrices(2 * K.ground_target, K.target_target)
    assert eval_gcmi([0, 2], K2) == 2 * eval_gcmi([0, 2], K)


def test_flmi_examples():
    K = SimilarityKernel.from_matrices([[0.9, 0.4], [0.1, 0.2]], np.eye(2))
    assert eval_flmi([], K) == 0.0
    assert eval_flmi([0], K) == pytest.approx(2.2, abs=1e-15)


def test_flmi_monotone(rng):
    for _ in range(50):
        K = random_kernel(rng, 8, 3)
        S = list(rng.permutation(8)[:4])
        for x in set(range(8)) - set(S):
            assert eval_flmi(S + [x], K) >= eval_flmi(S, K)


def test_logdmi_examples():
    K = SimilarityKernel.from_matrices(np.zeros((2, 2)), np.eye(2), np.eye(2))
    assert eval_logdmi([0, 1], K, 1e-6) == 0.0
    rho = 0.6
    K = SimilarityKernel.from_matrices([[rho]], [[1.0]], [[1.0]])
    # eps -> 0 limit: -log(1 - rho^2); the eps=1e-12 value is within 1e-10 of it
    assert eval_logdmi([0], K, 1e-12) == pytest.approx(-math.log(1 - rho ** 2), abs=1e-10)
    assert round(-math.log(1 - rho ** 2), 5) == 0.44629


def test_logdmi_nonnegative_and_matches_oracle(rng):
    for _ in range(100):
        K = random_kernel(rng, 8, int(rng.integers(1, 4)))
        S = list(rng.permutation(8)[:int(rng.integers(1, 6))])
        v = eval_logdmi(S, K, 1e-6)
        assert v >= -1e-8
        assert v == pytest.approx(logdmi_oracle(S, K, 1e-6), abs=1e-6)


def test_eval_errors():
    K = SimilarityKernel.from_matrices([[0.5]], [[1.0]], [[1.0]])
    with pytest.raises(IndexError):
        eval_gcmi([3], K)
    with pytest.raises(ValueError):
        eval_logdmi([], K)
    with pytest.raises(ValueError):
        eval_logdmi([0], SimilarityKernel.from_matrices([[0.5]], [[1.0]]))


def test_logdmi_factorization_failure():
    # an indefinite "kernel" makes the joint factorization fail
    K = SimilarityKernel.from_matrices([[0.1], [0.1]], [[1.0]], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NumericalDegeneracyError, match="increase"):
        eval_logdmi([0, 1], K, 1e-6)
    state = SelectionState("logdmi", K)
    state.commit(0)
    with pytest.raises(NumericalDegeneracyError):
        state.gains()


def test_gcmi_gain_state_independent(rng):
    K = random_kernel(rng, 10, 3)
    st = SelectionState("gcmi", K)
    g0 = st.marginal_gain(9)
    for x in range(5):
        st.commit(x)
        assert st.marginal_gain(9) == g0


def test_flmi_duplicate_gain():
    row = np.array([[0.7, 0.3, 0.5]])
    K = SimilarityKernel.from_matrices(np.vstack([row, row]), np.eye(3))
    st = SelectionState("flmi", K).commit(0)
    assert st.marginal_gain(1) == 0.7


@pytest.mark.parametrize("kind", KINDS)
def test_gain_matches_batch(kind, rng):
    for _ in range(20):
        n = int(rng.integers(10, 31))
        K = random_kernel(rng, n, int(rng.integers(1, 5)))
        st = SelectionState(kind, K)
        for x in rng.permutation(n)[:n - 1]:
            before, after = evaluate(kind, st.chosen, K), evaluate(kind, st.chosen + [x], K)
            g = marginal_gain(kind, x, st, K)
            assert g == pytest.approx(after - before, abs=1e-8)
            assert st.gains()[x] == pytest.approx(g, abs=1e-12)
            commit(kind, x, st, K)
            assert abs(st.value - evaluate(kind, st.chosen, K)) <= 1e-6


def test_logdmi_cholesky_factors(rng):
    K = random_kernel(rng, 12, 3)
    eps = 1e-6
    st = SelectionState("logdmi", K, eps)
    for x in [3, 7, 1, 10, 0]:
        st.commit(x)
    L_A, L_B = st.cholesky_factors()
    S = st.chosen
    A = K.ground_ground[np.ix_(S, S)] + eps * np.eye(len(S))
    Tinv = np.linalg.inv(K.target_target + eps * np.eye(3))
    B = A - K.ground_target[S] @ Tinv @ K.ground_target[S].T
    for L, M in ((L_A, A), (L_B, B)):
        assert np.allclose(np.triu(L, 1), 0.0)
        assert np.all(np.diag(L) > 0)
        np.testing.assert_allclose(L @ L.T, M, atol=1e-9)


def test_flmi_batch_matches_loop_oracle(rng):
    for _ in range(30):
        K = random_kernel(rng, 9, 3)
        S = list(rng.permutation(9)[:int(rng.integers(0, 7))])
        assert eval_flmi(S, K) == pytest.approx(flmi_oracle(S, K), abs=1e-12)


def test_state_errors(rng):
    K = random_kernel(rng, 5, 2)
    st = SelectionState("flmi", K).commit(2)
    with pytest.raises(ValueError, match="already"):
        st.marginal_gain(2)
    with pytest.raises(ValueError):
        st.commit(2)
    with pytest.raises(IndexError):
        st.marginal_gain(5)
    with pytest.raises(ValueError):
        marginal_gain("gcmi", 1, st)


def _subsets(items):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


@pytest.mark.parametrize("kind", KINDS)
def test_monotone_gains(kind, rng):
    for _ in range(100):
        K = random_kernel(rng, 8, 2)
        st = SelectionState(kind, K)
        for x in rng.permutation(8)[:5]:
            free = ~np.isnan(st.gains())
            assert np.all(st.gains()[free] >= -1e-8)
            st.commit(x)


@pytest.mark.parametrize("kind", [SmiKind.GCMI, SmiKind.FLMI])
def test_diminishing_returns_exhaustive(kind, rng):
    # every chain X <= Y and x outside Y on small instances
    for _ in range(20):
        n = 6
        K = random_kernel(rng, n, 2)
        f = {S: evaluate(kind, S, K) for S in _subsets(tuple(range(n)))}
        for Y in f:
            for X in _subsets(Y):
                for x in set(range(n)) - set(Y):
                    gx = f[tuple(sorted(X + (x,)))] - f[X]
                    gy = f[tuple(sorted(Y + (x,)))] - f[Y]
                    assert gx >= gy - 1e-8


def test_logdmi_is_not_submodular():
    # two near-duplicate ground points that each explain the target only jointly:
    # the second point's gain grows once the first is selected
    K = np.array([[1.0, 0.0, 0.6],
                  [0.0, 1.0, 0.6],
                  [0.6, 0.6, 1.0]])
    kern = SimilarityKernel.from_matrices(K[:2, 2:], K[2:, 2:], K[:2, :2])
    alone = evaluate("logdmi", [1], kern)
    after = evaluate("logdmi", [0, 1], kern) - evaluate("logdmi", [0], kern)
    assert after > alone + 1e-3


# SMI identity: eval(S; T) == f(S) + f(T) - f(S u T) for the base function on V u T

def _joint(K):
    n, m = K.n_ground, K.n_target
    J = np.zeros((n + m, n + m))
    J[:n, :n] = K.ground_ground
    J[:n, n:] = K.ground_target
    J[n:, :n] = K.ground_target.T
    J[n:, n:] = K.target_target
    return J


def _mi(f, S, T):
    return f(S) + f(T) - f(S + T)


def test_identity_graph_cut(rng):
    for _ in range(20):
        K = random_kernel(rng, 7, 3)
        J = _joint(K)

        def f(A):
            A = list(A)
            return J[:, A].sum() - J[np.ix_(A, A)].sum()

        S = list(rng.permutation(7)[:4])
        assert eval_gcmi(S, K) == pytest.approx(_mi(f, S, [7, 8, 9]), abs=1e-6)


def test_identity_facility_location(rng):
    # within-set similarities are the identity, so the facility-location MI
    # reduces exactly to the two-sided best-match sum
    for _ in range(20):
        n, m = 7, 3
        K = SimilarityKernel.from_matrices(rng.uniform(0, 1, (n, m)), np.eye(m), np.eye(n))
        J = _joint(K)

        def f(A):
            return J[:, list(A)].max(axis=1).sum() if A else 0.0

        S = list(rng.permutation(n)[:int(rng.integers(1, n))])
        assert eval_flmi(S, K) == pytest.approx(_mi(f, S, list(range(n, n + m))), abs=1e-6)


def test_identity_log_det(rng):
    eps = 1e-6
    for _ in range(20):
        K = random_kernel(rng, 7, 3)
        J = _joint(K) + eps * np.eye(10)

        def f(A):
            A = list(A)
            return np.linalg.slogdet(J[np.ix_(A, A)])[1] if A else 0.0

        S = list(rng.permutation(7)[:4])
        assert eval_logdmi(S, K, eps) == pytest.approx(_mi(f, S, [7, 8, 9]), abs=1e-6)
