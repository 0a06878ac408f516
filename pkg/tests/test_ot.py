import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from zilot._validation import NumericalError, ValidationError
from zilot.ot import (
    OtProblem,
    SinkhornConfig,
    assignment_bruteforce,
    round_to_feasible,
    sinkhorn,
    sinkhorn_batch,
    sinkhorn_unbalanced,
    transport_simplex,
    wasserstein1,
)


def lp_oracle(C, a, b):
    n, m = C.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


def weights(rng, n):
    w = rng.random(n) + 0.05
    return w / w.sum()


# -- transport simplex --------------------------------------------------------


def test_simplex_examples():
    p = transport_simplex(OtProblem([[3.5]]))
    assert p.coupling.tolist() == [[1.0]] and p.cost == 3.5
    p = transport_simplex(OtProblem([[0, 1], [1, 0]]))
    assert p.cost == 0.0
    np.testing.assert_allclose(p.coupling, 0.5 * np.eye(2))


@given(st.integers(0, 10**6), st.integers(1, 7))
def test_simplex_matches_bruteforce(seed, n):
    C = np.random.default_rng(seed).random((n, n))
    assert transport_simplex(OtProblem(C)).cost == pytest.approx(assignment_bruteforce(C), abs=1e-9)


@given(st.integers(0, 10**6), st.integers(1, 9), st.integers(1, 9))
def test_simplex_matches_lp(seed, n, m):
    rng = np.random.default_rng(seed)
    C = rng.random((n, m)) * 10
    a, b = weights(rng, n), weights(rng, m)
    plan = transport_simplex(OtProblem(C, a, b))
    assert plan.cost == pytest.approx(lp_oracle(C, a, b), rel=1e-9, abs=1e-9)
    assert plan.marginal_violation < 1e-9
    assert plan.coupling.min() >= 0


def test_simplex_degenerate_integer_costs():
    # many ties and degenerate bases
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(2, 8))
        C = rng.integers(0, 3, size=(n, n)).astype(float)
        assert transport_simplex(OtProblem(C)).cost == pytest.approx(assignment_bruteforce(C), abs=1e-9)


def test_simplex_rejects_bad_weights():
    with pytest.raises(ValidationError):
        OtProblem([[1, 2]], [1.0], [0.6, 0.6])
    with pytest.raises(ValidationError):
        OtProblem([[1, -2]])
    with pytest.raises(ValidationError):
        OtProblem([[1, np.inf]])


def test_solvers_are_deterministic():
    rng = np.random.default_rng(2)
    prob = OtProblem(rng.random((6, 5)), weights(rng, 6), weights(rng, 5))
    p1, p2 = transport_simplex(prob), transport_simplex(prob)
    assert p1.coupling.tobytes() == p2.coupling.tobytes()
    cfg = SinkhornConfig(0.05, 200)
    assert sinkhorn(prob, cfg).coupling.tobytes() == sinkhorn(prob, cfg).coupling.tobytes()


# -- brute force oracle -------------------------------------------------------


def test_bruteforce_examples():
    assert assignment_bruteforce(np.ones((3, 3)) - np.eye(3)) == 0.0
    assert assignment_bruteforce([[1, 2], [3, 0]]) == 0.5
    assert assignment_bruteforce([[4.0]]) == 4.0
    with pytest.raises(ValidationError):
        assignment_bruteforce(np.zeros((9, 9)))


# -- Sinkhorn -----------------------------------------------------------------


def test_sinkhorn_trivial():
    assert sinkhorn(OtProblem([[0.0]])).cost == 0.0


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 6))
def test_sinkhorn_not_below_exact(seed, n, m):
    rng = np.random.default_rng(seed)
    C = rng.random((n, m))
    a, b = weights(rng, n), weights(rng, m)
    exact = transport_simplex(OtProblem(C, a, b)).cost
    plan = sinkhorn(OtProblem(C, a, b), SinkhornConfig(0.05, 300))
    rounded = round_to_feasible(plan.coupling, a, b)
    np.testing.assert_allclose(rounded.sum(axis=1), a, atol=1e-12)
    np.testing.assert_allclose(rounded.sum(axis=0), b, atol=1e-12)
    assert (rounded * C).sum() >= exact - 1e-9


def test_sinkhorn_close_to_exact():
    rng = np.random.default_rng(11)
    C = rng.random((6, 6))
    exact = transport_simplex(OtProblem(C)).cost
    cost = sinkhorn(OtProblem(C), SinkhornConfig(0.002, 5000)).cost
    assert abs(cost - exact) <= 0.01 * C.max()


def test_sinkhorn_rows_exact():
    rng = np.random.default_rng(4)
    prob = OtProblem(rng.random((4, 7)), weights(rng, 4), weights(rng, 7))
    plan = sinkhorn(prob, SinkhornConfig(0.1, 20))
    np.testing.assert_allclose(plan.coupling.sum(axis=1), prob.source_weights, atol=1e-12)


def test_sinkhorn_eta_trend():
    rng = np.random.default_rng(8)
    for _ in range(5):
        C = rng.random((5, 5))
        exact = transport_simplex(OtProblem(C)).cost
        gaps = [abs(sinkhorn(OtProblem(C), SinkhornConfig(eta, 20000)).cost - exact) for eta in (0.1, 0.01, 0.001)]
        # below ~1e-6 the remaining gap is iteration error, not entropic bias
        assert gaps[0] >= gaps[1]
        assert gaps[2] <= gaps[1] + 1e-6
        assert gaps[2] < 1e-4


def test_sinkhorn_log_domain_survives_small_eta():
    # C/eta reaches 1e4: the plain kernel underflows, the log-domain one does not
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    plan = sinkhorn(OtProblem(C), SinkhornConfig(1e-4, 50))
    assert np.isfinite(plan.cost) and plan.cost == pytest.approx(0.0, abs=1e-12)


def test_sinkhorn_fast_path_agrees_with_log_path():
    rng = np.random.default_rng(0)
    C = rng.random((3, 6, 5))
    a, b = np.full(6, 1 / 6), np.full(5, 1 / 5)
    cfg = SinkhornConfig(0.02, 500)
    T_fast, _ = sinkhorn_batch(C, a, b, cfg)
    # scale costs past the fast-path bound while keeping C/eta identical
    T_log, _ = sinkhorn_batch(C * 100, a, b, SinkhornConfig(2.0, 500))
    np.testing.assert_allclose(T_fast, T_log, atol=1e-10)


def test_sinkhorn_batch_matches_single():
    rng = np.random.default_rng(1)
    C = rng.random((4, 3, 3))
    a = b = np.full(3, 1 / 3)
    T, _ = sinkhorn_batch(C, a, b, SinkhornConfig())
    for k in range(4):
        np.testing.assert_allclose(T[k], sinkhorn(OtProblem(C[k])).coupling, atol=1e-14)


def test_sinkhorn_tolerance_exit():
    rng = np.random.default_rng(3)
    plan = sinkhorn(OtProblem(rng.random((4, 4))), SinkhornConfig(0.5, 10_000, tol=1e-10))
    assert plan.n_iter < 10_000
    assert plan.marginal_violation < 1e-9


def test_sinkhorn_numerical_error_reports_range():
    with pytest.raises(NumericalError, match="C/eta"):
        sinkhorn_batch(np.array([[[np.nan]]]), np.ones(1), np.ones(1), SinkhornConfig())


def test_config_validation():
    with pytest.raises(ValidationError):
        SinkhornConfig(eta=0)
    with pytest.raises(ValidationError):
        SinkhornConfig(iterations=0)
    with pytest.raises(ValidationError):
        SinkhornConfig(xi_b=-1.0)
    with pytest.raises(ValidationError):
        sinkhorn_unbalanced(OtProblem([[1.0]]), SinkhornConfig())


# -- unbalanced ---------------------------------------------------------------


def test_unbalanced_large_xi_recovers_balanced():
    rng = np.random.default_rng(6)
    for _ in range(5):
        C = rng.random((5, 4))
        prob = OtProblem(C)
        bal = sinkhorn(prob, SinkhornConfig(0.02, 500)).cost
        unb = sinkhorn_unbalanced(prob, SinkhornConfig(0.02, 500, xi_b=1e6)).cost
        assert abs(bal - unb) < 1e-3


def test_unbalanced_abandons_far_atom():
    # target atom 1 is far from every source atom
    C = np.array([[0.0, 50.0], [0.0, 50.0]])
    prob = OtProblem(C, [0.5, 0.5], [0.5, 0.5])
    eta, xi = 0.05, 0.5
    plan = sinkhorn_unbalanced(prob, SinkhornConfig(eta, 2000, xi_b=xi))
    shipped = plan.coupling[:, 1].sum()

    # grid search the objective over the mass q sent to the far atom
    def objective(q):
        T = np.array([[0.5 - q / 2, q / 2], [0.5 - q / 2, q / 2]])
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.nansum(np.where(T > 0, T * (np.log(T) - 1), 0.0))
        col = T.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            kl = np.sum(np.where(col > 0, col * np.log(col / 0.5), 0.0) - col + 0.5)
        return (T * C).sum() + eta * ent + xi * kl

    grid = np.linspace(0, 1, 100_001)
    best = grid[np.argmin([objective(q) for q in grid])]
    assert shipped < 1e-3
    assert shipped == pytest.approx(best, abs=1e-4)
    assert plan.target_kl > 0


def test_unbalanced_source_marginal_hard():
    rng = np.random.default_rng(9)
    prob = OtProblem(rng.random((5, 3)) * 3)
    plan = sinkhorn_unbalanced(prob, SinkhornConfig(0.1, 300, xi_b=1.0))
    np.testing.assert_allclose(plan.coupling.sum(axis=1), prob.source_weights, atol=1e-12)


# -- W1 metric properties -----------------------------------------------------


def test_w1_identity_and_symmetry():
    rng = np.random.default_rng(12)
    x = rng.random((5, 2))
    assert wasserstein1(x, x[::-1]) == pytest.approx(0.0, abs=1e-12)
    y = rng.random((4, 2))
    assert wasserstein1(x, y) == pytest.approx(wasserstein1(y, x), abs=1e-12)


def test_w1_triangle_inequality():
    rng = np.random.default_rng(13)
    for _ in range(50):
        x, y, z = (rng.random((int(rng.integers(1, 6)), 2)) for _ in range(3))
        assert wasserstein1(x, z) <= wasserstein1(x, y) + wasserstein1(y, z) + 1e-9


def test_problem_json_round_trip():
    prob = OtProblem([[1.0, 2.0]], None, [0.25, 0.75])
    again = OtProblem.from_dict(prob.to_dict())
    np.testing.assert_array_equal(again.target_weights, prob.target_weights)
    with pytest.raises(ValidationError):
        OtProblem.from_dict({})
