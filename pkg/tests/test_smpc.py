"""Affine-recourse stochastic MPC tests.

Oracles used here are test-local: explicit rollout cost sums, a symbolic
two-stage expansion, Monte-Carlo expectation estimates, and least-squares
solves over both the shared-gain and the fully dense recourse
parameterizations.
"""
from __future__ import annotations

import numpy as np
import pytest

from conftest import rollout_states, scalar_prediction
from quadtrack import qp
from quadtrack.dynamics import stack_prediction
from quadtrack.smpc import (
    AffinePolicy,
    ConstraintSet,
    CostWeights,
    DisturbanceStats,
    assemble_constraints,
    assemble_cost,
    cost_operators,
    gain_response,
    lyapunov_value,
    policy_sizes,
    policy_to_input,
    riccati_terminal_weight,
    solve_affine_policy,
    split_decision,
    stack_policy,
)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def rollout_cost(a, b, g, q_w, r_w, p_w, x0, u_seq, w_seq):
    """Sum of stage costs along the exact rollout (scalar or matrix weights)."""
    states = rollout_states(a, b, g, x0, u_seq, w_seq)
    n_stages = len(u_seq)
    q_m = np.atleast_2d(q_w)
    r_m = np.atleast_2d(r_w)
    p_m = np.atleast_2d(p_w)
    total = 0.0
    for i in range(n_stages):
        total += states[i] @ q_m @ states[i]
        u = np.atleast_1d(u_seq[i])
        total += u @ r_m @ u
    total += states[n_stages] @ p_m @ states[n_stages]
    return float(total)


def dense_gain_oracle(gains, N, n_u, n_w):
    """Toeplitz layout built by direct loops."""
    m = np.zeros((N * n_u, N * n_w))
    for i in range(N):
        for k in range(i):
            m[i * n_u : (i + 1) * n_u, k * n_w : (k + 1) * n_w] = gains[i - k - 1]
    return m


def quadratic_eval(p, q, c0, theta):
    return 0.5 * theta @ p @ theta + q @ theta + c0


def scalar_stacked_operators(a, b, g, q_w, r_w, p_w, N):
    """Test-local (H_x, H_u, H_w) for a scalar system, built by loops."""
    a_st = np.array([[a**i] for i in range(N + 1)])
    b_st = np.zeros((N + 1, N))
    g_st = np.zeros((N + 1, N))
    for i in range(1, N + 1):
        for k in range(i):
            b_st[i, k] = a ** (i - 1 - k) * b
            g_st[i, k] = a ** (i - 1 - k) * g
    roots = np.array([np.sqrt(q_w)] * N + [np.sqrt(p_w)])
    h_x = np.vstack([roots[:, None] * a_st, np.zeros((N, 1))])
    h_u = np.vstack([roots[:, None] * b_st, np.sqrt(r_w) * np.eye(N)])
    h_w = np.vstack([roots[:, None] * g_st, np.zeros((N, N))])
    return h_x, h_u, h_w


DEFAULT_STATS = lambda N: DisturbanceStats(np.zeros(N), np.zeros((N, N)))


# ---------------------------------------------------------------------------
# policy container
# ---------------------------------------------------------------------------

def test_policy_to_input_hand_blocks(rng):
    N, n_u, n_w = 3, 2, 3
    gains = rng.standard_normal((N - 1, n_u, n_w))
    nominal = rng.standard_normal((N, n_u))
    pol = AffinePolicy(gains, nominal)
    w = rng.standard_normal((N, n_w))
    assert np.allclose(policy_to_input(pol, w, 0), nominal[0])
    assert np.allclose(policy_to_input(pol, w, 1), gains[0] @ w[0] + nominal[1])
    assert np.allclose(
        policy_to_input(pol, w, 2), gains[1] @ w[0] + gains[0] @ w[1] + nominal[2]
    )
    with pytest.raises(ValueError):
        policy_to_input(pol, w, 3)


def test_policy_validation():
    with pytest.raises(ValueError):
        AffinePolicy(np.zeros((1, 2, 3)), np.zeros((3, 2)))  # needs 2 gain blocks
    with pytest.raises(ValueError):
        AffinePolicy(np.zeros((2, 3, 3)), np.zeros((3, 2)))  # gain rows mismatch
    pol = AffinePolicy(np.zeros((0, 1, 1)), np.zeros((1, 1)))
    assert pol.horizon == 1


def test_dense_gain_matches_oracle_and_recourse(rng):
    N, n_u, n_w = 4, 2, 2
    gains = rng.standard_normal((N - 1, n_u, n_w))
    nominal = rng.standard_normal((N, n_u))
    pol = AffinePolicy(gains, nominal)
    dense = pol.dense_gain()
    assert np.allclose(dense, dense_gain_oracle(gains, N, n_u, n_w))
    w = rng.standard_normal((N, n_w))
    stacked = dense @ w.reshape(-1) + nominal.reshape(-1)
    for i in range(N):
        assert np.allclose(stacked[i * n_u : (i + 1) * n_u], policy_to_input(pol, w, i))


def test_split_stack_roundtrip(rng):
    pred = scalar_prediction(horizon=4)
    n_m, n_v = policy_sizes(pred)
    theta = rng.standard_normal(n_m + n_v)
    pol = split_decision(theta, pred)
    assert np.allclose(stack_policy(pol, pred), theta)


def test_gain_response_is_dense_action(rng):
    a = rng.standard_normal((2, 2))
    b = rng.standard_normal((2, 1))
    g = rng.standard_normal((2, 2))
    pred = stack_prediction(a, b, g, 4)
    gains = rng.standard_normal((3, 1, 2))
    pol = AffinePolicy(gains, np.zeros((4, 1)))
    z = rng.standard_normal(8)
    via_phi = gain_response(pred, z) @ gains.ravel()
    via_dense = pol.dense_gain() @ z
    assert np.allclose(via_phi, via_dense, atol=1e-12)


# ---------------------------------------------------------------------------
# cost assembly: deterministic part
# ---------------------------------------------------------------------------

def test_cost_zero_cov_matches_rollout_and_ignores_gains(rng):
    a, b, g = 0.9, 0.5, 1.0
    N = 3
    pred = scalar_prediction(a, b, g, N)
    q_w, r_w, p_w = 2.0, 0.3, 1.5
    weights = CostWeights(np.array([[q_w]]), np.array([[r_w]]), np.array([[p_w]]))
    mu = rng.standard_normal(N)
    stats = DisturbanceStats(mu, np.zeros((N, N)))
    x0 = np.array([0.7])
    p_mat, q_vec, c0 = assemble_cost(x0, pred, weights, stats)
    for _ in range(5):
        v = rng.standard_normal(N)
        gains = rng.standard_normal(N - 1)
        theta = np.concatenate([gains, v])
        val = quadratic_eval(p_mat, q_vec, c0, theta)
        oracle = rollout_cost(a, b, g, q_w, r_w, p_w, x0, v[:, None], mu[:, None])
        assert val == pytest.approx(oracle, rel=1e-9)
        # same nominal, different gains: identical value when cov is zero
        theta2 = np.concatenate([rng.standard_normal(N - 1), v])
        assert quadratic_eval(p_mat, q_vec, c0, theta2) == pytest.approx(val, rel=1e-12)


def test_cost_operators_shapes(rng):
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 2))
    g = rng.standard_normal((3, 1))
    pred = stack_prediction(a, b, g, 4)
    w = CostWeights(np.eye(3), np.eye(2), 2.0 * np.eye(3))
    h_x, h_u, h_w = cost_operators(pred, w)
    assert h_x.shape == (5 * 3 + 4 * 2, 3)
    assert h_u.shape == (5 * 3 + 4 * 2, 8)
    assert h_w.shape == (5 * 3 + 4 * 2, 4)


def test_cost_weight_validation():
    with pytest.raises(ValueError):
        CostWeights(np.eye(2), np.zeros((1, 1)), np.eye(2))  # R not PD
    with pytest.raises(ValueError):
        CostWeights(-np.eye(2), np.eye(1), np.eye(2))  # Q negative
    w = CostWeights(np.array([1.0, 2.0]), np.array([0.5]), np.array([3.0, 4.0]))
    assert w.q_state.shape == (2, 2)  # 1-D diagonals promoted


# ---------------------------------------------------------------------------
# cost assembly: stochastic part
# ---------------------------------------------------------------------------

def test_two_stage_symbolic_expansion(rng):
    """Assembled quadratic equals the by-hand expectation for N = 2."""
    a, b, g = 0.8, 0.6, 1.2
    q_w, r_w, p_w = 1.7, 0.4, 2.2
    x0 = 0.5
    mu = np.array([0.3, -0.2])
    cov = np.array([[0.5, 0.1], [0.1, 0.3]])
    pred = scalar_prediction(a, b, g, 2)
    weights = CostWeights(np.array([[q_w]]), np.array([[r_w]]), np.array([[p_w]]))
    stats = DisturbanceStats(mu, cov)
    p_mat, q_vec, c0 = assemble_cost(np.array([x0]), pred, weights, stats)

    def hand_expected(m1, v0, v1):
        x1m = a * x0 + b * v0 + g * mu[0]
        x2m = a * x1m + b * v1 + g * mu[1]
        coef0 = a * g + b * m1  # eta0 coefficient inside x2
        var_x1 = g * g * cov[0, 0]
        var_x2 = coef0**2 * cov[0, 0] + 2 * coef0 * g * cov[0, 1] + g * g * cov[1, 1]
        var_u1 = m1 * m1 * cov[0, 0]
        return (
            q_w * x0 * x0
            + q_w * (x1m * x1m + var_x1)
            + p_w * (x2m * x2m + var_x2)
            + r_w * v0 * v0
            + r_w * (v1 * v1 + var_u1)
        )

    for _ in range(8):
        m1, v0, v1 = rng.standard_normal(3)
        theta = np.array([m1, v0, v1])
        got = quadratic_eval(p_mat, q_vec, c0, theta)
        assert got == pytest.approx(hand_expected(m1, v0, v1), rel=1e-9)


def test_monte_carlo_expected_cost(rng):
    """Assembled value equals the sample mean of realized rollout costs."""
    a, b, g = 0.85, 0.5, 1.0
    q_w, r_w, p_w = 1.0, 0.2, 1.8
    N = 3
    pred = scalar_prediction(a, b, g, N)
    weights = CostWeights(np.array([[q_w]]), np.array([[r_w]]), np.array([[p_w]]))
    mu = np.array([0.4, 0.0, -0.3])
    chol = np.array([[0.6, 0.0, 0.0], [0.2, 0.5, 0.0], [-0.1, 0.1, 0.4]])
    cov = chol @ chol.T
    stats = DisturbanceStats(mu, cov)
    x0 = np.array([0.6])
    p_mat, q_vec, c0 = assemble_cost(x0, pred, weights, stats)

    gains = np.array([0.3, -0.2])
    v = np.array([0.5, -0.1, 0.2])
    theta = np.concatenate([gains, v])
    predicted = quadratic_eval(p_mat, q_vec, c0, theta)

    m_dense = dense_gain_oracle(gains[:, None, None], N, 1, 1)
    draws = 200_000
    eta = np.random.default_rng(123).standard_normal((draws, N)) @ chol.T
    w_samples = mu + eta
    u_samples = eta @ m_dense.T + v
    # vectorized rollout
    x = np.full(draws, x0[0])
    cost = q_w * x * x
    for i in range(N):
        cost += r_w * u_samples[:, i] ** 2
        x = a * x + b * u_samples[:, i] + g * w_samples[:, i]
        cost += (q_w if i < N - 1 else p_w) * x * x
    mc = cost.mean()
    se = cost.std() / np.sqrt(draws)
    assert abs(predicted - mc) < max(4.0 * se, 0.01 * abs(mc)), (predicted, mc, se)


def test_unconstrained_solution_matches_least_squares(rng):
    """solve_affine_policy equals an explicit least-squares solve over (gains, nominal)."""
    a, b, g = 0.9, 0.4, 1.1
    q_w, r_w, p_w = 1.3, 0.25, 2.0
    N = 3
    pred = scalar_prediction(a, b, g, N)
    weights = CostWeights(np.array([[q_w]]), np.array([[r_w]]), np.array([[p_w]]))
    mu = np.array([0.2, -0.4, 0.1])
    chol = np.diag([0.5, 0.4, 0.3])
    stats = DisturbanceStats(mu, chol @ chol.T)
    x0 = np.array([0.8])

    h_x, h_u, h_w = scalar_stacked_operators(a, b, g, q_w, r_w, p_w, N)
    # residual rows: deterministic part affine in v, one block per chol column in M
    n_m, n_v = 2, 3
    rows = []
    offs = []
    a_det = np.zeros((h_u.shape[0], n_m + n_v))
    a_det[:, n_m:] = h_u
    rows.append(a_det)
    offs.append(h_x @ x0 + h_w @ mu)
    for col in chol.T.T:  # columns of chol
        m_basis = np.zeros((h_u.shape[0], n_m + n_v))
        for j in range(n_m):
            gains = np.zeros(n_m)
            gains[j] = 1.0
            m_dense = dense_gain_oracle(gains[:, None, None], N, 1, 1)
            m_basis[:, j] = h_u @ (m_dense @ col)
        rows.append(m_basis)
        offs.append(h_w @ col)
    big_a = np.vstack(rows)
    big_b = -np.concatenate(offs)
    theta_ls, *_ = np.linalg.lstsq(big_a, big_b, rcond=None)
    value_ls = float(np.sum((big_a @ theta_ls - big_b) ** 2))

    sol = solve_affine_policy(x0, pred, weights, None, stats)
    assert sol.status == qp.OPTIMAL
    theta_pkg = np.concatenate([sol.policy.gains.ravel(), sol.policy.nominal.ravel()])
    assert np.allclose(theta_pkg, theta_ls, atol=1e-6)
    assert sol.value == pytest.approx(value_ls, rel=1e-6, abs=1e-8)


def test_gains_invariant_to_disturbance_mean(rng):
    a, b, g = 0.9, 0.4, 1.1
    N = 4
    pred = scalar_prediction(a, b, g, N)
    weights = CostWeights(np.array([[1.0]]), np.array([[0.2]]), np.array([[1.5]]))
    cov = 0.2 * np.eye(N)
    x0 = np.array([0.5])
    mu1 = np.zeros(N)
    mu2 = np.array([1.0, -0.5, 0.7, 0.2])
    s1 = solve_affine_policy(x0, pred, weights, None, DisturbanceStats(mu1, cov))
    s2 = solve_affine_policy(x0, pred, weights, None, DisturbanceStats(mu2, cov))
    assert np.allclose(s1.policy.gains, s2.policy.gains, atol=1e-6)
    assert not np.allclose(s1.policy.nominal, s2.policy.nominal, atol=1e-3)
    # Hessian identical; only the nominal-block linear term moves with the mean
    p1, q1, _ = assemble_cost(x0, pred, weights, DisturbanceStats(mu1, cov))
    p2, q2, _ = assemble_cost(x0, pred, weights, DisturbanceStats(mu2, cov))
    assert np.allclose(p1, p2, atol=1e-12)
    n_m, _ = policy_sizes(pred)
    assert np.allclose(q1[:n_m], q2[:n_m], atol=1e-12)


def test_shared_gains_match_dense_recourse_with_riccati_terminal():
    """With the Riccati terminal weight and stationary noise, restricting the
    recourse to shared diagonal gains costs nothing: the dense lower-triangular
    least squares attains the same optimum."""
    a, b, g = 0.9, 0.5, 1.0
    q_w, r_w = 1.0, 0.4
    N = 3
    p_term = riccati_terminal_weight(
        np.array([[a]]), np.array([[b]]), np.array([[q_w]]), np.array([[r_w]])
    )
    p_w = float(p_term[0, 0])
    pred = scalar_prediction(a, b, g, N)
    weights = CostWeights(np.array([[q_w]]), np.array([[r_w]]), p_term)
    sigma2 = 0.3
    stats = DisturbanceStats(np.zeros(N), sigma2 * np.eye(N))
    x0 = np.array([0.7])

    sol = solve_affine_policy(x0, pred, weights, None, stats)
    assert sol.status == qp.OPTIMAL

    # dense oracle: unknowns m10, m20, m21, v0, v1, v2
    h_x, h_u, h_w = scalar_stacked_operators(a, b, g, q_w, r_w, p_w, N)
    chol_cols = np.sqrt(sigma2) * np.eye(N)
    pairs = [(1, 0), (2, 0), (2, 1)]
    n_d = len(pairs)
    rows = [np.zeros((h_u.shape[0], n_d + N))]
    rows[0][:, n_d:] = h_u
    offs = [h_x @ x0 + h_w @ np.zeros(N)]
    for col in chol_cols.T:
        blk = np.zeros((h_u.shape[0], n_d + N))
        for j, (i_row, k_col) in enumerate(pairs):
            m_dense = np.zeros((N, N))
            m_dense[i_row, k_col] = 1.0
            blk[:, j] = h_u @ (m_dense @ col)
        rows.append(blk)
        offs.append(h_w @ col)
    big_a = np.vstack(rows)
    big_b = -np.concatenate(offs)
    theta_d, *_ = np.linalg.lstsq(big_a, big_b, rcond=None)
    value_dense = float(np.sum((big_a @ theta_d - big_b) ** 2))

    # dense recourse can only do better or equal; with Riccati it ties exactly
    assert value_dense <= sol.value + 1e-8
    assert sol.value == pytest.approx(value_dense, rel=1e-7, abs=1e-9)
    # and the dense optimum is itself Toeplitz: matching diagonal entries agree
    assert theta_d[0] == pytest.approx(theta_d[2], abs=1e-6)  # m10 == m21


# ---------------------------------------------------------------------------
# constraints
# ---------------------------------------------------------------------------

def test_constraints_reduce_to_nominal_without_disturbance_box():
    pred = scalar_prediction(0.9, 0.5, 1.0, 3)
    cons = ConstraintSet(
        x_max=np.array([2.0]),
        u_min=np.array([-1.0]),
        u_max=np.array([1.5]),
        xf_max=np.array([1.0]),
        w_box=np.zeros(1),
    )
    stats = DEFAULT_STATS(3)
    mats = assemble_constraints(np.array([0.1]), pred, cons, stats)
    assert mats.n_aux == 0
    # 2 rows per input per stage + 2 rows per finite state bound per stage
    assert mats.a_in.shape == (2 * 3 + 2 * 3, 2 + 3)
    # a nominal plan inside the box satisfies every row
    theta = np.concatenate([np.zeros(2), np.array([0.5, -0.5, 0.2])])
    assert np.all(mats.a_in @ theta <= mats.b_in + 1e-12)
    # pushing an input past its bound violates some row
    theta_bad = np.concatenate([np.zeros(2), np.array([1.6, 0.0, 0.0])])
    assert np.any(mats.a_in @ theta_bad > mats.b_in)


def test_state_row_margin_single_stage():
    """N = 1: the robust state bound tightens by sigma * |g| exactly."""
    a, b, g = 0.8, 0.5, 1.0
    x0 = 0.2
    bound, sigma = 1.0, 0.3
    pred = scalar_prediction(a, b, g, 1)
    cons = ConstraintSet(
        x_max=np.array([np.inf]),
        u_min=np.array([-10.0]),
        u_max=np.array([10.0]),
        xf_max=np.array([bound]),
        w_box=np.array([sigma]),
    )
    mats = assemble_constraints(np.array([x0]), pred, cons, DEFAULT_STATS(1))
    assert mats.n_aux == 1
    # objective pulls v far beyond the feasible interval; optimum lands on it
    v_target = 50.0
    width = 1 + mats.n_aux
    p = np.zeros((width, width))
    p[0, 0] = 2.0
    q = np.zeros(width)
    q[0] = -2.0 * v_target
    sol = qp.solve(qp.QpProblem(p, q, a_in=mats.a_in, b_in=mats.b_in))
    assert sol.status == qp.OPTIMAL
    v_expected = (bound - sigma * abs(g) - a * x0) / b
    assert sol.x[0] == pytest.approx(v_expected, abs=1e-6)


def test_input_margin_uses_gain_magnitude():
    """Stage-1 input rows must include the |M_1| * sigma margin."""
    pred = scalar_prediction(0.9, 0.5, 1.0, 2)
    sigma = 0.4
    u_hi = 1.0
    cons = ConstraintSet(
        x_max=np.array([np.inf]),
        u_min=np.array([-u_hi]),
        u_max=np.array([u_hi]),
        xf_max=np.array([np.inf]),
        w_box=np.array([sigma]),
    )
    mats = assemble_constraints(np.array([0.0]), pred, cons, DEFAULT_STATS(2))
    # decision: [m1, v0, v1, aux...]; set m1 = 1.5, v1 = u_hi - something
    n_m, n_v = 1, 2
    for m1 in (0.0, 1.5, -2.0):
        for v1 in (0.0, 0.7):
            aux = np.abs([m1])  # optimal auxiliary is |M|
            theta = np.concatenate([[m1], [0.0, v1], aux])
            theta = np.pad(theta, (0, mats.a_in.shape[1] - theta.size))
            feas = np.all(mats.a_in @ theta <= mats.b_in + 1e-12)
            expected = abs(v1) + abs(m1) * sigma <= u_hi + 1e-12
            assert feas == expected, (m1, v1)


def test_robust_plan_survives_sampled_disturbances():
    """Every box-disturbance realization keeps the optimized plan feasible."""
    a, b, g = 0.9, 0.5, 1.0
    N = 3
    sigma = 0.3
    u_hi = 1.5
    pred = scalar_prediction(a, b, g, N)
    weights = CostWeights(np.array([[1.0]]), np.array([[0.1]]), np.array([[2.0]]))
    cons = ConstraintSet(
        x_max=np.array([1.5]),
        u_min=np.array([-u_hi]),
        u_max=np.array([u_hi]),
        xf_max=np.array([1.2]),
        w_box=np.array([sigma]),
    )
    mu = np.full(N, 0.2)
    stats = DisturbanceStats(mu, 0.25 * np.eye(N))
    x0 = np.array([1.0])
    sol = solve_affine_policy(x0, pred, weights, cons, stats)
    assert sol.status == qp.OPTIMAL
    assert np.any(np.abs(sol.policy.gains) > 0.1)  # recourse actually used
    r = np.random.default_rng(5)
    worst_u = 0.0
    for _ in range(10_000):
        eta = r.uniform(-sigma, sigma, N)
        w = mu + eta
        x = x0[0]
        for i in range(N):
            u = policy_to_input(sol.policy, eta[:, None], i)[0]
            worst_u = max(worst_u, abs(u))
            assert -u_hi - 1e-6 <= u <= u_hi + 1e-6
            x = a * x + b * u + g * w[i]
            limit = 1.2 if i == N - 1 else 1.5
            assert abs(x) <= limit + 1e-6
    assert worst_u > u_hi - 0.05  # the input bound genuinely binds


def test_constraint_validation():
    with pytest.raises(ValueError):
        ConstraintSet(np.array([1.0]), np.array([0.1]), np.array([1.0]), np.array([1.0]), np.zeros(1))
    with pytest.raises(ValueError):
        ConstraintSet(np.array([-1.0]), np.array([-1.0]), np.array([1.0]), np.array([1.0]), np.zeros(1))
    with pytest.raises(ValueError):
        ConstraintSet(np.array([1.0]), np.array([-1.0]), np.array([1.0]), np.array([1.0]), -np.ones(1))


def test_stats_validation():
    with pytest.raises(ValueError):
        DisturbanceStats(np.zeros(2), -np.eye(2))
    with pytest.raises(ValueError):
        DisturbanceStats(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        DisturbanceStats(np.zeros(3), np.eye(2))


# ---------------------------------------------------------------------------
# convexity of the assembled program
# ---------------------------------------------------------------------------

def test_hessian_psd_random_assemblies(rng):
    for trial in range(10):
        r = np.random.default_rng(40 + trial)
        n, n_u, n_w, N = 2, 1, 2, 3
        a = 0.8 * r.standard_normal((n, n))
        b = r.standard_normal((n, n_u))
        g = r.standard_normal((n, n_w))
        pred = stack_prediction(a, b, g, N)
        weights = CostWeights(np.eye(n), 0.1 * np.eye(n_u), np.eye(n))
        raw = r.standard_normal((N * n_w, N * n_w))
        stats = DisturbanceStats(r.standard_normal(N * n_w), raw @ raw.T / (N * n_w))
        p_mat, _, _ = assemble_cost(r.standard_normal(n), pred, weights, stats)
        assert np.min(np.linalg.eigvalsh(p_mat)) >= -1e-8


def test_midpoint_convexity(rng):
    pred = scalar_prediction(0.9, 0.5, 1.0, 3)
    weights = CostWeights(np.array([[1.0]]), np.array([[0.2]]), np.array([[1.5]]))
    stats = DisturbanceStats(np.full(3, 0.1), 0.3 * np.eye(3))
    p_mat, q_vec, c0 = assemble_cost(np.array([0.4]), pred, weights, stats)
    for _ in range(10):
        t1 = rng.standard_normal(5)
        t2 = rng.standard_normal(5)
        mid = 0.5 * (t1 + t2)
        lhs = quadratic_eval(p_mat, q_vec, c0, mid)
        rhs = 0.5 * (
            quadratic_eval(p_mat, q_vec, c0, t1) + quadratic_eval(p_mat, q_vec, c0, t2)
        )
        assert lhs <= rhs + 1e-7


# ---------------------------------------------------------------------------
# end-to-end solves
# ---------------------------------------------------------------------------

def test_origin_with_no_disturbance_is_free():
    pred = scalar_prediction(0.9, 0.5, 1.0, 3)
    weights = CostWeights(np.array([[1.0]]), np.array([[0.2]]), np.array([[1.5]]))
    cons = ConstraintSet(
        x_max=np.array([2.0]),
        u_min=np.array([-1.0]),
        u_max=np.array([1.0]),
        xf_max=np.array([2.0]),
        w_box=np.zeros(1),
    )
    sol = solve_affine_policy(np.zeros(1), pred, weights, cons, DEFAULT_STATS(3))
    assert sol.status == qp.OPTIMAL
    assert abs(sol.value) < 1e-8
    assert np.allclose(sol.policy.nominal, 0.0, atol=1e-6)


def test_value_positive_away_from_origin():
    pred = scalar_prediction(0.9, 0.5, 1.0, 3)
    weights = CostWeights(np.array([[1.0]]), np.array([[0.2]]), np.array([[1.5]]))
    sol = solve_affine_policy(np.array([1.0]), pred, weights, None, DEFAULT_STATS(3))
    assert sol.value >= 1.0  # at least the stage-0 term q * x0^2


def test_receding_horizon_feedforward_shrinks_offset():
    """Feeding the constant disturbance as the predicted mean removes nearly
    all steady-state offset compared to planning with a zero mean."""
    a, b, g = 0.95, 0.4, 1.0
    N = 6
    w_const = 0.5
    pred = scalar_prediction(a, b, g, N)
    p_term = riccati_terminal_weight(
        np.array([[a]]), np.array([[b]]), np.array([[1.0]]), np.array([[0.3]])
    )
    weights = CostWeights(np.array([[1.0]]), np.array([[0.3]]), p_term)

    def run(mu_supplied: bool) -> float:
        x = 1.0
        for _ in range(60):
            mu = np.full(N, w_const) if mu_supplied else np.zeros(N)
            sol = solve_affine_policy(np.array([x]), pred, weights, None, DisturbanceStats(mu, np.zeros((N, N))))
            assert sol.status == qp.OPTIMAL
            x = a * x + b * sol.policy.nominal[0, 0] + g * w_const
        return abs(x)

    offset_with = run(True)
    offset_without = run(False)
    assert offset_without >= 10.0 * max(offset_with, 1e-9)
    # preview does not null the offset entirely (the quadratic trade-off keeps
    # a little), but it must land well under the uncompensated steady state
    assert offset_with < 0.1 < offset_without


def test_lyapunov_decrease_scalar_closed_loop():
    a, b, g = 0.9, 0.5, 1.0
    N = 5
    pred = scalar_prediction(a, b, g, N)
    p_term = riccati_terminal_weight(
        np.array([[a]]), np.array([[b]]), np.array([[1.0]]), np.array([[0.2]])
    )
    weights = CostWeights(np.array([[1.0]]), np.array([[0.2]]), p_term)
    stats = DEFAULT_STATS(N)
    assert lyapunov_value(np.zeros(1), pred, weights, None, stats) == pytest.approx(0.0, abs=1e-8)
    x = 1.0
    v_prev = lyapunov_value(np.array([x]), pred, weights, None, stats)
    assert v_prev > 0.0
    for _ in range(15):
        sol = solve_affine_policy(np.array([x]), pred, weights, None, stats)
        x = a * x + b * sol.policy.nominal[0, 0]
        v = lyapunov_value(np.array([x]), pred, weights, None, stats)
        if abs(x) < 0.05:
            break
        assert v < v_prev + 1e-10
        v_prev = v


# ---------------------------------------------------------------------------
# Riccati terminal weight
# ---------------------------------------------------------------------------

def test_riccati_scalar_closed_form():
    a, b, q_w, r_w = 0.9, 0.5, 1.0, 0.2
    p = riccati_terminal_weight(
        np.array([[a]]), np.array([[b]]), np.array([[q_w]]), np.array([[r_w]])
    )[0, 0]
    # p = q + a^2 p - (a b p)^2 / (r + b^2 p) rearranges to
    # b^2 p^2 + (r - r a^2 - q b^2) p - q r = 0; take the positive root
    aa = b * b
    bb = r_w - r_w * a * a - q_w * b * b
    cc = -q_w * r_w
    p_root = (-bb + np.sqrt(bb * bb - 4 * aa * cc)) / (2 * aa)
    assert p == pytest.approx(p_root, rel=1e-8)


def test_riccati_fixed_point_and_stabilizing(rng):
    for trial in range(5):
        r = np.random.default_rng(60 + trial)
        n, n_u = 3, 2
        a = r.standard_normal((n, n))
        a *= 1.1 / max(1.0, np.max(np.abs(np.linalg.eigvals(a))))  # mildly unstable ok
        b = r.standard_normal((n, n_u))
        q_mat = np.eye(n)
        r_mat = 0.5 * np.eye(n_u)
        p = riccati_terminal_weight(a, b, q_mat, r_mat)
        btp = b.T @ p
        k = np.linalg.solve(r_mat + btp @ b, btp @ a)
        resid = q_mat + a.T @ p @ (a - b @ k) - p
        assert np.max(np.abs(resid)) < 1e-6
        assert np.max(np.abs(np.linalg.eigvals(a - b @ k))) < 1.0
        assert np.min(np.linalg.eigvalsh(p)) > 0.0
