"""Stochastic MPC with simplified affine disturbance feedback.

Decision object: a causal affine recourse policy over the prediction horizon,

    u_i = sum_{k=0}^{i-1} M_{i-k} eta_k + v_i,        i = 0..N-1,

where eta_k is the deviation of the realized disturbance from its predicted
mean and the gain blocks M_j are shared along diagonals (block lower
triangular Toeplitz), so only N-1 blocks of shape (n_u, n_w) plus the N
nominal inputs v are free. u_0 = v_0 by construction: no disturbance has been
observed when the first input commits.

The predicted mean mu (measured wind, learned residual forecast, reference
feedforward) drives the nominal trajectory; the gains only shape how the
plan would react to zero-mean scatter around it. With the stacked operators
H_x, H_u, H_w induced by the stage weights, the expected cost is exactly

    || H_x x0 + H_u v + H_w mu ||^2  +  tr(C^{1/2} S' S C^{1/2}),
    S = H_u M_dense + H_w,

which is E || H_x x0 + H_u v + H_w mu + S eta ||^2 for zero-mean eta with
covariance C. Both pieces are convex quadratics in (M, v); the assembled
Hessian is PSD by construction.

State/input box constraints are enforced for every eta in the per-axis box
|eta_j| <= w_box_j. The worst case of a linear function over a box is a sum
of absolute values of coefficients, which is lifted exactly into linear rows
with auxiliary variables: one Lambda >= |M_j| block for all input rows
(margins nest along the Toeplitz diagonals) and one auxiliary row-vector per
finite state bound. Rows with infinite bounds are dropped.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .dynamics import LinearPrediction


@dataclass
class AffinePolicy:
    """Toeplitz recourse gains plus nominal inputs.

    ``gains`` has shape (N-1, n_u, n_w) holding M_1..M_{N-1}; ``nominal`` has
    shape (N, n_u) holding v_0..v_{N-1}. An N = 1 policy has empty gains.
    """

    gains: np.ndarray
    nominal: np.ndarray

    def __post_init__(self) -> None:
        self.gains = np.asarray(self.gains, dtype=float)
        self.nominal = np.asarray(self.nominal, dtype=float)
        if self.nominal.ndim != 2:
            raise ValueError("nominal must be (N, n_u)")
        n = self.nominal.shape[0]
        if self.gains.ndim != 3 or self.gains.shape[0] != n - 1:
            raise ValueError("gains must be (N-1, n_u, n_w)")
        if n >= 2 and self.gains.shape[1] != self.nominal.shape[1]:
            raise ValueError("gain rows must match input dimension")

    @property
    def horizon(self) -> int:
        return self.nominal.shape[0]

    def dense_gain(self) -> np.ndarray:
        """Full (N n_u, N n_w) strictly block lower triangular Toeplitz map."""
        n, n_u = self.nominal.shape
        n_w = self.gains.shape[2]
        m = np.zeros((n * n_u, n * n_w))
        for i in range(n):
            for k in range(i):
                m[i * n_u : (i + 1) * n_u, k * n_w : (k + 1) * n_w] = self.gains[i - k - 1]
        return m


def policy_to_input(policy: AffinePolicy, w_seq: np.ndarray, i: int) -> np.ndarray:
    """Evaluate the recourse law at stage ``i`` for realized deviations ``w_seq``."""
    if not 0 <= i < policy.horizon:
        raise ValueError("stage index outside the horizon")
    w_seq = np.asarray(w_seq, dtype=float)
    u = policy.nominal[i].copy()
    for k in range(i):
        u += policy.gains[i - k - 1] @ w_seq[k]
    return u


@dataclass
class DisturbanceStats:
    """Stacked first two moments of the disturbance sequence.

    ``mean`` is (N * n_w,), ``cov`` is (N n_w, N n_w) PSD.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        k = self.mean.size
        if self.cov.shape != (k, k):
            raise ValueError("cov must match the stacked mean length")
        if np.max(np.abs(self.cov - self.cov.T), initial=0.0) > 1e-9:
            raise ValueError("cov must be symmetric")
        if k and np.min(np.linalg.eigvalsh(self.cov)) < -1e-8:
            raise ValueError("cov must be positive semidefinite")


@dataclass
class CostWeights:
    """Diagonal-friendly stage weights: running state, input, terminal state."""

    q_state: np.ndarray
    r_input: np.ndarray
    p_terminal: np.ndarray

    def __post_init__(self) -> None:
        self.q_state = _symmetrize(np.asarray(self.q_state, dtype=float))
        self.r_input = _symmetrize(np.asarray(self.r_input, dtype=float))
        self.p_terminal = _symmetrize(np.asarray(self.p_terminal, dtype=float))
        for name, w in (("q_state", self.q_state), ("p_terminal", self.p_terminal)):
            if np.min(np.linalg.eigvalsh(w)) < -1e-9:
                raise ValueError(f"{name} must be PSD")
        if np.min(np.linalg.eigvalsh(self.r_input)) <= 0.0:
            raise ValueError("r_input must be positive definite")


@dataclass
class ConstraintSet:
    """Symmetric state boxes, input interval, terminal box, disturbance box.

    All state-like boxes are half-widths about the reference (np.inf disables
    a row); the input interval is in deviation coordinates and must contain
    zero. ``w_box`` holds per-axis disturbance half-widths.
    """

    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    xf_max: np.ndarray
    w_box: np.ndarray

    def __post_init__(self) -> None:
        self.x_max = np.asarray(self.x_max, dtype=float)
        self.u_min = np.asarray(self.u_min, dtype=float)
        self.u_max = np.asarray(self.u_max, dtype=float)
        self.xf_max = np.asarray(self.xf_max, dtype=float)
        self.w_box = np.asarray(self.w_box, dtype=float)
        if np.any(self.x_max <= 0.0) or np.any(self.xf_max <= 0.0):
            raise ValueError("state boxes must have positive half-widths")
        if np.any(self.u_min >= 0.0) or np.any(self.u_max <= 0.0):
            raise ValueError("input interval must contain zero strictly")
        if np.any(self.w_box < 0.0):
            raise ValueError("w_box must be non-negative")


def _symmetrize(a: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        a = np.diag(a)
    return 0.5 * (a + a.T)


def _sqrt_psd(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(_symmetrize(a))
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def policy_sizes(pred: LinearPrediction) -> tuple[int, int]:
    """(number of gain entries, number of nominal entries) for a horizon."""
    n_m = (pred.horizon - 1) * pred.n_u * pred.n_w
    n_v = pred.horizon * pred.n_u
    return n_m, n_v


def split_decision(theta: np.ndarray, pred: LinearPrediction) -> AffinePolicy:
    """Unpack a stacked decision vector into an AffinePolicy."""
    n_m, n_v = policy_sizes(pred)
    gains = theta[:n_m].reshape(pred.horizon - 1, pred.n_u, pred.n_w)
    nominal = theta[n_m : n_m + n_v].reshape(pred.horizon, pred.n_u)
    return AffinePolicy(gains.copy(), nominal.copy())


def stack_policy(policy: AffinePolicy, pred: LinearPrediction) -> np.ndarray:
    n_m, n_v = policy_sizes(pred)
    theta = np.empty(n_m + n_v)
    theta[:n_m] = policy.gains.ravel()
    theta[n_m:] = policy.nominal.ravel()
    return theta


def cost_operators(pred: LinearPrediction, weights: CostWeights):
    """Stacked square-root operators (H_x, H_u, H_w) of the stage costs."""
    N = pred.horizon
    n, n_u = pred.n, pred.n_u
    q_root = _sqrt_psd(weights.q_state)
    p_root = _sqrt_psd(weights.p_terminal)
    r_root = _sqrt_psd(weights.r_input)
    if q_root.shape[0] != n or p_root.shape[0] != n:
        raise ValueError("state weights must match the state dimension")
    if r_root.shape[0] != n_u:
        raise ValueError("input weight must match the input dimension")

    roots = [q_root] * N + [p_root]
    state_root = np.zeros(((N + 1) * n, (N + 1) * n))
    for i, r in enumerate(roots):
        state_root[i * n : (i + 1) * n, i * n : (i + 1) * n] = r
    input_root = np.kron(np.eye(N), r_root)

    h_x = np.vstack([state_root @ pred.a_stack, np.zeros((N * n_u, n))])
    h_u = np.vstack([state_root @ pred.b_stack, input_root])
    h_w = np.vstack([state_root @ pred.g_stack, np.zeros((N * n_u, N * pred.n_w))])
    return h_x, h_u, h_w


def gain_response(pred: LinearPrediction, z: np.ndarray) -> np.ndarray:
    """Linear map Phi(z): gain entries -> stacked input sequence M_dense @ z.

    Row block i of the result is sum_j M_j z_{i-j}; entry layout matches
    ``AffinePolicy.gains.ravel()`` (row-major per block).
    """
    N, n_u, n_w = pred.horizon, pred.n_u, pred.n_w
    n_m = (N - 1) * n_u * n_w
    phi = np.zeros((N * n_u, n_m))
    eye = np.eye(n_u)
    z = np.asarray(z, dtype=float).reshape(N, n_w)
    for i in range(1, N):
        for j in range(1, i + 1):
            block = np.kron(eye, z[i - j])
            phi[i * n_u : (i + 1) * n_u, (j - 1) * n_u * n_w : j * n_u * n_w] += block
    return phi


def assemble_cost(
    x0: np.ndarray,
    pred: LinearPrediction,
    weights: CostWeights,
    stats: DisturbanceStats,
):
    """Expected-cost quadratic 0.5 th' P th + q' th + c0 over (gains, nominal).

    The constant c0 carries the decision-independent part so the assembled
    value function matches the expected cost exactly, not just up to offset.
    """
    x0 = np.asarray(x0, dtype=float)
    h_x, h_u, h_w = cost_operators(pred, weights)
    n_m, n_v = policy_sizes(pred)
    n_th = n_m + n_v

    e_det = h_x @ x0 + h_w @ stats.mean
    p = np.zeros((n_th, n_th))
    q = np.zeros(n_th)
    c0 = float(e_det @ e_det)
    p[n_m:, n_m:] = 2.0 * h_u.T @ h_u
    q[n_m:] = 2.0 * h_u.T @ e_det

    cov_root = _sqrt_psd(stats.cov)
    for col in cov_root.T:
        if not np.any(col):
            continue
        d_col = h_u @ gain_response(pred, col)
        e_col = h_w @ col
        p[:n_m, :n_m] += 2.0 * d_col.T @ d_col
        q[:n_m] += 2.0 * d_col.T @ e_col
        c0 += float(e_col @ e_col)

    p = _symmetrize(p)
    floor = np.min(np.linalg.eigvalsh(p))
    if floor < 0.0:
        p += (1e-9 - floor) * np.eye(n_th)
    return p, q, c0


@dataclass
class ConstraintMatrices:
    """Inequality rows over the extended vector [gains, nominal, aux]."""

    a_in: np.ndarray
    b_in: np.ndarray
    n_aux: int


def assemble_constraints(
    x0: np.ndarray,
    pred: LinearPrediction,
    cons: ConstraintSet,
    stats: DisturbanceStats,
) -> ConstraintMatrices:
    """Robust box constraints as linear rows, exact for box disturbance sets.

    Input rows share one auxiliary matrix Lambda >= |M_j| (elementwise);
    each finite state/terminal bound gets its own auxiliary vector bounding
    the absolute row of the disturbance-to-state map. With w_box = 0 no
    auxiliaries are created and the rows reduce to their nominal versions.
    """
    x0 = np.asarray(x0, dtype=float)
    N, n, n_u, n_w = pred.horizon, pred.n, pred.n_u, pred.n_w
    n_m, n_v = policy_sizes(pred)
    sigma = np.asarray(cons.w_box, dtype=float)
    if sigma.shape != (n_w,):
        raise ValueError("w_box must have one entry per disturbance axis")
    robust = bool(np.any(sigma > 0.0))
    sigma_stack = np.tile(sigma, N)

    free_x = pred.a_stack @ x0 + pred.g_stack @ stats.mean

    rows = []
    rhs = []
    n_aux_input = n_m if robust else 0
    aux_state: list[tuple[int, np.ndarray, float, float]] = []
    # collect finite state rows first so auxiliary columns can be sized
    state_specs = []
    for stage in range(1, N + 1):
        bound_vec = cons.xf_max if stage == N else cons.x_max
        for coord in range(n):
            bound = bound_vec[coord]
            if not np.isfinite(bound):
                continue
            state_specs.append((stage, coord, float(bound)))
    n_aux_per_state = N * n_w if robust else 0
    n_aux = n_aux_input + n_aux_per_state * len(state_specs)
    width = n_m + n_v + n_aux

    def new_row():
        return np.zeros(width)

    # input interval rows: v_i + margin <= u_max, -v_i + margin <= -u_min
    for stage in range(N):
        for coord in range(n_u):
            margin_cols = []
            if robust and stage > 0:
                for j in range(1, stage + 1):
                    base = n_m + n_v + (j - 1) * n_u * n_w + coord * n_w
                    margin_cols.append((base, sigma))
            for sign, bound in ((1.0, cons.u_max[coord]), (-1.0, -cons.u_min[coord])):
                row = new_row()
                row[n_m + stage * n_u + coord] = sign
                for base, sig in margin_cols:
                    row[base : base + n_w] += sig
                rows.append(row)
                rhs.append(bound)

    if robust:
        # Lambda >= +-M_j elementwise
        for idx in range(n_m):
            for sign in (1.0, -1.0):
                row = new_row()
                row[idx] = sign
                row[n_m + n_v + idx] = -1.0
                rows.append(row)
                rhs.append(0.0)

    # state rows: |row of (B M + G)| enters via per-row auxiliaries
    for spec_idx, (stage, coord, bound) in enumerate(state_specs):
        b_row = pred.b_stack[stage * n + coord]
        g_row = pred.g_stack[stage * n + coord]
        nominal_part = float(free_x[stage * n + coord])
        aux_base = n_m + n_v + n_aux_input + spec_idx * n_aux_per_state
        if robust:
            # (n_m, N n_w): gain-entry coefficients of this state row's
            # disturbance response, contracted over the stacked input index
            phi_row = np.tensordot(b_row, _phi_cache(pred), axes=(0, 0))
            # aux_l >= +-(coefficient of eta_l), coefficient affine in gains
            for l in range(N * n_w):
                coeff_m = phi_row[:, l]
                coeff_c = g_row[l]
                for sign in (1.0, -1.0):
                    row = new_row()
                    row[:n_m] = sign * coeff_m
                    row[aux_base + l] = -1.0
                    rows.append(row)
                    rhs.append(-sign * coeff_c)
        for sign in (1.0, -1.0):
            row = new_row()
            row[n_m : n_m + n_v] = sign * b_row
            if robust:
                row[aux_base : aux_base + N * n_w] = sigma_stack
            rows.append(row)
            rhs.append(bound - sign * nominal_part)

    if not rows:
        return ConstraintMatrices(np.zeros((0, width)), np.zeros(0), n_aux)
    return ConstraintMatrices(np.vstack(rows), np.asarray(rhs, dtype=float), n_aux)


def _phi_cache(pred: LinearPrediction) -> np.ndarray:
    """(N n_u, n_m, N n_w) tensor T with (M_dense)[r, l] = T[r, :, l] @ gains.

    Memoized on the prediction object; the tensor depends only on sizes but
    rebuilding it per constraint assembly would dominate runtime.
    """
    t = getattr(pred, "_phi_tensor", None)
    if t is None:
        N, n_u, n_w = pred.horizon, pred.n_u, pred.n_w
        n_m = (N - 1) * n_u * n_w
        t = np.zeros((N * n_u, n_m, N * n_w))
        for l in range(N * n_w):
            basis = np.zeros(N * n_w)
            basis[l] = 1.0
            t[:, :, l] = gain_response(pred, basis)
        pred._phi_tensor = t
    return t


@dataclass
class PolicySolution:
    policy: AffinePolicy
    value: float
    status: str
    iterations: int
    solve_time: float
    theta: np.ndarray = field(repr=False, default=None)
    duals: np.ndarray = field(repr=False, default=None)


def solve_affine_policy(
    x0: np.ndarray,
    pred: LinearPrediction,
    weights: CostWeights,
    cons: ConstraintSet | None,
    stats: DisturbanceStats,
    settings: qp.QpSettings | None = None,
    warm_theta: np.ndarray | None = None,
    warm_duals: np.ndarray | None = None,
) -> PolicySolution:
    """Assemble and solve the finite-horizon program; value includes c0."""
    t0 = time.perf_counter()
    p, q, c0 = assemble_cost(x0, pred, weights, stats)
    n_core = p.shape[0]
    if cons is not None:
        mats = assemble_constraints(x0, pred, cons, stats)
        width = n_core + mats.n_aux
        p_full = np.zeros((width, width))
        p_full[:n_core, :n_core] = p
        q_full = np.concatenate([q, np.zeros(mats.n_aux)])
        problem = qp.QpProblem(p_full, q_full, a_in=mats.a_in, b_in=mats.b_in)
    else:
        problem = qp.QpProblem(p, q)
    if warm_theta is not None and warm_theta.shape != (problem.n,):
        warm_theta = None
        warm_duals = None
    sol = qp.solve(problem, settings, warm_x=warm_theta, warm_y=warm_duals)
    policy = split_decision(sol.x[:n_core], pred)
    value = sol.objective + c0
    dt = time.perf_counter() - t0
    duals = np.concatenate([sol.y_in, sol.y_eq]) if sol.y_in.size or sol.y_eq.size else np.zeros(0)
    return PolicySolution(policy, value, sol.status, sol.iterations, dt, sol.x, duals)


def lyapunov_value(
    x0: np.ndarray,
    pred: LinearPrediction,
    weights: CostWeights,
    cons: ConstraintSet | None,
    stats: DisturbanceStats,
    settings: qp.QpSettings | None = None,
) -> float:
    """Optimal-value gap L*(x0) - L*(0), the candidate Lyapunov function."""
    at_x = solve_affine_policy(x0, pred, weights, cons, stats, settings)
    at_origin = solve_affine_policy(np.zeros_like(np.asarray(x0, dtype=float)), pred, weights, cons, stats, settings)
    if at_x.status != qp.OPTIMAL or at_origin.status != qp.OPTIMAL:
        raise RuntimeError("Lyapunov evaluation requires both solves to converge")
    return at_x.value - at_origin.value


def riccati_terminal_weight(
    a: np.ndarray,
    b: np.ndarray,
    q_state: np.ndarray,
    r_input: np.ndarray,
    tol: float = 1e-9,
    max_iters: int = 100_000,
) -> np.ndarray:
    """Fixed point of the discrete Riccati difference equation.

    Plain fixed-point iteration started at Q; robust on linearizations whose
    uncontrollable directions are (marginally) stable.
    """
    q_mat = _symmetrize(np.asarray(q_state, dtype=float))
    r_mat = _symmetrize(np.asarray(r_input, dtype=float))
    p = q_mat.copy()
    for _ in range(max_iters):
        btp = b.T @ p
        gain = np.linalg.solve(r_mat + btp @ b, btp @ a)
        p_next = q_mat + a.T @ p @ (a - b @ gain)
        p_next = _symmetrize(p_next)
        if np.max(np.abs(p_next - p)) < tol * max(1.0, np.max(np.abs(p))):
            return p_next
        p = p_next
    raise RuntimeError("Riccati iteration did not converge")
