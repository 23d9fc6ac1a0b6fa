"""Tabular distributional dynamic programming on finite MDPs.

These routines exist as ground truth for the function-approximation agent:
the projected distributional Bellman operator, its fixed point, and policy
iteration driven by quantile means, all on MDPs small enough to solve
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantiles import project_w1


@dataclass
class FiniteMdp:
    """Finite MDP with reward a deterministic function of (state, action).

    ``transitions[s, a, s']`` is the next-state probability; ``rewards[s, a]``
    the immediate reward; ``gamma`` in [0, 1).
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        n_s, n_a, n_s2 = self.transitions.shape
        if n_s != n_s2:
            raise ValueError("transitions must be (n_s, n_a, n_s)")
        if self.rewards.shape != (n_s, n_a):
            raise ValueError("rewards must be (n_s, n_a)")
        rows = self.transitions.sum(axis=2)
        if np.any(self.transitions < -1e-12) or np.any(np.abs(rows - 1.0) > 1e-9):
            raise ValueError("transition rows must be distributions")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def sup_wasserstein(z1: np.ndarray, z2: np.ndarray) -> float:
    """Largest per-(s, a) W_inf distance between two quantile tables.

    For equal-count uniformly weighted sorted atoms this is the max absolute
    difference of matching atoms.
    """
    return float(np.max(np.abs(np.asarray(z1) - np.asarray(z2))))


def distributional_backup(mdp: FiniteMdp, policy: np.ndarray, z: np.ndarray) -> np.ndarray:
    """One application of the projected distributional Bellman operator.

    ``z`` is (n_s, n_a, n_q). For each (s, a) the target distribution is the
    mixture over s' of r(s,a) + gamma * Z(s', pi(s')), projected back to n_q
    quantiles.
    """
    n_s, n_a, n_q = z.shape
    out = np.empty_like(z)
    atom_prob = np.repeat(mdp.transitions, n_q, axis=2) / n_q
    for s in range(n_s):
        for a in range(n_a):
            succ = z[np.arange(n_s), policy, :]
            atoms = (mdp.rewards[s, a] + mdp.gamma * succ).ravel()
            probs = atom_prob[s, a]
            keep = probs > 0.0
            out[s, a] = project_w1(atoms[keep], probs[keep] / probs[keep].sum(), n_q)
    return out


def distributional_evaluation(
    mdp: FiniteMdp,
    policy: np.ndarray,
    n_quantiles: int,
    tol: float = 1e-12,
    max_iters: int = 500,
):
    """Iterate the projected backup to its fixed point.

    Returns (z, distances) where distances[k] is the sup-W_inf gap between
    iterates k and k+1.
    """
    policy = np.asarray(policy, dtype=int)
    z = np.zeros((mdp.n_states, mdp.n_actions, n_quantiles))
    distances = []
    for _ in range(max_iters):
        z_next = distributional_backup(mdp, policy, z)
        d = sup_wasserstein(z_next, z)
        distances.append(d)
        z = z_next
        if d < tol:
            break
    return z, np.array(distances)


def exact_policy_values(mdp: FiniteMdp, policy: np.ndarray) -> np.ndarray:
    """Classical Q^pi via a linear solve (the oracle for quantile means)."""
    policy = np.asarray(policy, dtype=int)
    n_s = mdp.n_states
    p_pi = mdp.transitions[np.arange(n_s), policy, :]
    r_pi = mdp.rewards[np.arange(n_s), policy]
    v = np.linalg.solve(np.eye(n_s) - mdp.gamma * p_pi, r_pi)
    return mdp.rewards + mdp.gamma * mdp.transitions @ v


def value_iteration(mdp: FiniteMdp, tol: float = 1e-12, max_iters: int = 100_000):
    """Optimal Q and greedy policy by classical value iteration."""
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iters):
        v = q.max(axis=1)
        q_next = mdp.rewards + mdp.gamma * mdp.transitions @ v
        if np.max(np.abs(q_next - q)) < tol:
            q = q_next
            break
        q = q_next
    return q, q.argmax(axis=1)


def tabular_distributional_iteration(
    mdp: FiniteMdp,
    policy: np.ndarray,
    n_quantiles: int,
    iterations: int,
):
    """Fixed number of projected backups; returns (z, successive distances)."""
    policy = np.asarray(policy, dtype=int)
    z = np.zeros((mdp.n_states, mdp.n_actions, n_quantiles))
    distances = []
    for _ in range(iterations):
        z_next = distributional_backup(mdp, policy, z)
        distances.append(sup_wasserstein(z_next, z))
        z = z_next
    return z, np.array(distances)


def tabular_policy_improvement(
    mdp: FiniteMdp,
    n_quantiles: int,
    max_rounds: int = 100,
):
    """Alternate distributional evaluation and greedy improvement.

    Greedy actions come from the quantile means of the evaluated distribution;
    ties break toward the lowest action index. Returns (policies, q_tables)
    where q_tables[i] holds the quantile-mean Q of policies[i]. The loop stops
    when the policy repeats.
    """
    policy = np.zeros(mdp.n_states, dtype=int)
    policies = []
    q_tables = []
    for _ in range(max_rounds):
        z, _ = distributional_evaluation(mdp, policy, n_quantiles)
        q = z.mean(axis=2)
        policies.append(policy.copy())
        q_tables.append(q)
        improved = q.argmax(axis=1)
        if np.array_equal(improved, policy):
            break
        policy = improved
    return policies, q_tables
