"""Dense convex QP solver based on ADMM operator splitting.

Solves

    minimize    0.5 x' P x + q' x
    subject to  A_in x <= b_in
                A_eq x == b_eq

with P symmetric positive semidefinite. Internally both constraint blocks
are folded into l <= A x <= u (inequalities get l = -inf, equalities l = u)
and the classic splitting iteration with over-relaxation is run on the
condensed KKT system. A final active-set polish solve tightens the returned
iterate to near machine precision when it succeeds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    p: np.ndarray
    q: np.ndarray
    a_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        n = self.q.size
        if self.p.shape != (n, n):
            raise ValueError("P must be square and match q")
        if np.max(np.abs(self.p - self.p.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(self.p))):
            raise ValueError("P must be symmetric")
        for name in ("a_in", "a_eq"):
            a = getattr(self, name)
            b = getattr(self, "b" + name[1:])
            if a is None or np.size(a) == 0:
                setattr(self, name, None)
                setattr(self, "b" + name[1:], None)
                continue
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if a.shape != (b.size, n):
                raise ValueError(f"{name} and its rhs have inconsistent shapes")
            setattr(self, name, a)
            setattr(self, "b" + name[1:], b)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def n_in(self) -> int:
        return 0 if self.a_in is None else self.a_in.shape[0]

    @property
    def n_eq(self) -> int:
        return 0 if self.a_eq is None else self.a_eq.shape[0]

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.p @ x + self.q @ x)


@dataclass
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iters: int = 20_000
    rho: float = 0.1
    rho_eq_scale: float = 1e3
    sigma: float = 1e-6
    alpha: float = 1.6
    adapt_interval: int = 50
    check_interval: int = 10
    polish: bool = True
    eps_infeas: float = 1e-9


@dataclass
class QpSolution:
    x: np.ndarray
    y_in: np.ndarray
    y_eq: np.ndarray
    status: str
    iterations: int
    objective: float
    primal_residual: float
    dual_residual: float


def _factor(p, a, sigma, rho_vec):
    kkt = p + sigma * np.eye(p.shape[0])
    if a.shape[0]:
        kkt = kkt + (a.T * rho_vec) @ a
    return scipy.linalg.cho_factor(kkt, lower=True, check_finite=False)


def solve(
    problem: QpProblem,
    settings: QpSettings | None = None,
    warm_x: np.ndarray | None = None,
    warm_y: np.ndarray | None = None,
) -> QpSolution:
    """Run the splitting iteration; see module docstring for the algorithm.

    ``warm_x``/``warm_y`` warm-start the primal iterate and the stacked dual
    (inequality rows first, then equality rows).
    """
    st = settings or QpSettings()
    n = problem.n
    m_in, m_eq = problem.n_in, problem.n_eq
    m = m_in + m_eq

    blocks = []
    l_parts, u_parts = [], []
    if m_in:
        blocks.append(problem.a_in)
        l_parts.append(np.full(m_in, -np.inf))
        u_parts.append(problem.b_in)
    if m_eq:
        blocks.append(problem.a_eq)
        l_parts.append(problem.b_eq)
        u_parts.append(problem.b_eq)
    a = np.vstack(blocks) if blocks else np.zeros((0, n))
    l = np.concatenate(l_parts) if l_parts else np.zeros(0)
    u = np.concatenate(u_parts) if u_parts else np.zeros(0)

    x = np.zeros(n) if warm_x is None else np.array(warm_x, dtype=float)
    y = np.zeros(m) if warm_y is None else np.array(warm_y, dtype=float)
    if x.shape != (n,) or y.shape != (m,):
        raise ValueError("warm start shapes do not match the problem")

    if m == 0:
        chol = scipy.linalg.cho_factor(
            problem.p + st.sigma * np.eye(n), lower=True, check_finite=False
        )
        x = scipy.linalg.cho_solve(chol, -problem.q, check_finite=False)
        r_dual = float(np.max(np.abs(problem.p @ x + problem.q), initial=0.0))
        return QpSolution(x, np.zeros(0), np.zeros(0), OPTIMAL, 1, problem.objective(x), 0.0, r_dual)

    rho_vec = np.full(m, st.rho)
    if m_eq:
        rho_vec[m_in:] *= st.rho_eq_scale
    chol = _factor(problem.p, a, st.sigma, rho_vec)

    z = np.clip(a @ x, l, u)
    status = MAX_ITERS
    iters = st.max_iters
    r_prim = r_dual = np.inf

    for k in range(1, st.max_iters + 1):
        rhs = st.sigma * x - problem.q + a.T @ (rho_vec * z - y)
        x_tilde = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
        z_tilde = a @ x_tilde
        x_new = st.alpha * x_tilde + (1.0 - st.alpha) * x
        z_relaxed = st.alpha * z_tilde + (1.0 - st.alpha) * z
        z_new = np.clip(z_relaxed + y / rho_vec, l, u)
        y_new = y + rho_vec * (z_relaxed - z_new)

        dy = y_new - y
        dx = x_new - x
        x, z, y = x_new, z_new, y_new

        if k % st.check_interval == 0 or k == st.max_iters:
            ax = a @ x
            r_prim_vec = ax - z
            r_dual_vec = problem.p @ x + problem.q + a.T @ y
            r_prim = float(np.max(np.abs(r_prim_vec), initial=0.0))
            r_dual = float(np.max(np.abs(r_dual_vec), initial=0.0))
            eps_prim = st.eps_abs + st.eps_rel * max(
                np.max(np.abs(ax), initial=0.0), np.max(np.abs(z), initial=0.0)
            )
            eps_dual = st.eps_abs + st.eps_rel * max(
                np.max(np.abs(problem.p @ x), initial=0.0),
                np.max(np.abs(a.T @ y), initial=0.0),
                np.max(np.abs(problem.q), initial=0.0),
            )
            if r_prim <= eps_prim and r_dual <= eps_dual:
                status = OPTIMAL
                iters = k
                break

            if _primal_infeasible(a, l, u, dy, st.eps_infeas):
                status = INFEASIBLE
                iters = k
                break
            if _dual_infeasible(problem, a, l, u, dx, st.eps_infeas):
                status = INFEASIBLE
                iters = k
                break

        if st.adapt_interval and k % st.adapt_interval == 0 and r_prim < np.inf:
            scale = np.sqrt(max(r_prim, 1e-16) / max(r_dual, 1e-16))
            scale = float(np.clip(scale, 1e-3, 1e3))
            if scale > 5.0 or scale < 0.2:
                rho_vec *= scale
                chol = _factor(problem.p, a, st.sigma, rho_vec)

    y_in = np.maximum(y[:m_in], 0.0)
    y_eq = y[m_in:].copy()

    if status == OPTIMAL and st.polish:
        polished = _polish(problem, a, l, u, x, y)
        if polished is not None:
            x, y_in, y_eq, r_prim, r_dual = polished

    return QpSolution(
        x=x,
        y_in=y_in,
        y_eq=y_eq,
        status=status,
        iterations=iters,
        objective=problem.objective(x),
        primal_residual=r_prim,
        dual_residual=r_dual,
    )


def _primal_infeasible(a, l, u, dy, eps) -> bool:
    norm = np.max(np.abs(dy), initial=0.0)
    if norm <= eps:
        return False
    dyn = dy / norm
    if np.max(np.abs(a.T @ dyn), initial=0.0) > eps * max(1.0, np.max(np.abs(a))):
        return False
    pos = np.maximum(dyn, 0.0)
    neg = np.minimum(dyn, 0.0)
    # rows with infinite bounds cannot carry certificate mass
    finite_u = np.isfinite(u)
    finite_l = np.isfinite(l)
    if np.any(pos[~finite_u] > eps):
        return False
    if np.any(-neg[~finite_l] > eps):
        return False
    support = float(np.sum(u[finite_u] * pos[finite_u]) + np.sum(l[finite_l] * neg[finite_l]))
    return support < -eps


def _dual_infeasible(problem, a, l, u, dx, eps) -> bool:
    norm = np.max(np.abs(dx), initial=0.0)
    if norm <= eps:
        return False
    d = dx / norm
    scale = max(1.0, np.max(np.abs(problem.p)))
    if np.max(np.abs(problem.p @ d), initial=0.0) > eps * scale:
        return False
    if problem.q @ d > -eps:
        return False
    ad = a @ d
    ok_up = (ad <= eps) | ~np.isfinite(u)
    ok_lo = (ad >= -eps) | ~np.isfinite(l)
    return bool(np.all(ok_up & ok_lo))


def _polish(problem, a, l, u, x, y):
    """Equality solve on the detected active set; returns None if it fails.

    The active set is re-detected at a ladder of slack tolerances (the ADMM
    iterate sits roughly eps away from each active face, so a single fixed
    window either misses active rows or drags in inactive ones); the candidate
    with the smallest worst-case KKT residual wins.
    """
    best = None
    for tol in (1e-9, 1e-7, 1e-6, 1e-5):
        cand = _polish_at(problem, a, l, u, x, tol)
        if cand is None:
            continue
        if best is None or max(cand[3], cand[4]) < max(best[3], best[4]):
            best = cand
    if best is None:
        return None
    r_dual_old = float(np.max(np.abs(problem.p @ x + problem.q + a.T @ y), initial=0.0))
    r_prim_old = float(
        max(np.max((a @ x) - u, initial=0.0), np.max(l - (a @ x), initial=0.0), 0.0)
    )
    if max(best[3], best[4]) <= max(r_prim_old, r_dual_old, 1e-12):
        return best
    return None


def _polish_at(problem, a, l, u, x, rel_tol):
    n = problem.n
    m_in = problem.n_in
    ax = a @ x
    act_tol = rel_tol * max(1.0, np.max(np.abs(ax), initial=0.0))
    upper = (u - ax <= act_tol) & np.isfinite(u)
    lower = (ax - l <= act_tol) & np.isfinite(l)
    active = upper | lower
    rhs_act = np.where(upper, u, l)

    a_act = a[active]
    b_act = rhs_act[active]
    k = a_act.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = problem.p + 1e-12 * np.eye(n)
    kkt[:n, n:] = a_act.T
    kkt[n:, :n] = a_act
    kkt[n:, n:] = -1e-12 * np.eye(k)
    rhs = np.concatenate([-problem.q, b_act])
    try:
        sol = scipy.linalg.lu_solve(
            scipy.linalg.lu_factor(kkt, check_finite=False), rhs, check_finite=False
        )
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    x_p = sol[:n]
    nu = sol[n:]

    y_p = np.zeros(a.shape[0])
    y_p[active] = nu
    # inequality duals must point the right way; reject sign-violating polish
    y_in_p = y_p[:m_in]
    y_in_p = np.maximum(y_in_p, 0.0)

    ax_p = a @ x_p
    viol_up = np.max(ax_p - u, initial=0.0)
    viol_lo = np.max(l - ax_p, initial=0.0)
    y_stacked = np.concatenate([y_in_p, y_p[m_in:]])
    r_dual_p = float(np.max(np.abs(problem.p @ x_p + problem.q + a.T @ y_stacked), initial=0.0))
    r_prim_p = float(max(viol_up, viol_lo, 0.0))
    return x_p, y_in_p, y_p[m_in:], r_prim_p, r_dual_p


def check_kkt(problem: QpProblem, solution: QpSolution, tol: float = 1e-6) -> dict:
    """KKT residuals of a candidate solution.

    Returns a dict with stationarity, primal/dual feasibility and
    complementarity residuals plus an overall ``ok`` flag at ``tol``.
    """
    x = solution.x
    grad = problem.p @ x + problem.q
    primal = 0.0
    comp = 0.0
    dual = 0.0
    if problem.n_in:
        slack = problem.a_in @ x - problem.b_in
        primal = max(primal, float(np.max(slack, initial=0.0)))
        dual = max(dual, float(np.max(-solution.y_in, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(solution.y_in * slack), initial=0.0)))
        grad = grad + problem.a_in.T @ solution.y_in
    if problem.n_eq:
        resid = problem.a_eq @ x - problem.b_eq
        primal = max(primal, float(np.max(np.abs(resid), initial=0.0)))
        grad = grad + problem.a_eq.T @ solution.y_eq
    stationarity = float(np.max(np.abs(grad), initial=0.0))
    out = {
        "stationarity": stationarity,
        "primal": primal,
        "dual": dual,
        "complementarity": comp,
    }
    out["ok"] = all(v <= tol for v in out.values())
    return out
