"""Shared helpers: seeded rngs, random MDP/QP factories, scalar test systems."""
from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mdp(rng: np.random.Generator, n_states: int = 4, n_actions: int = 3):
    """Random finite MDP with row-stochastic transitions and bounded rewards."""
    transitions = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    rewards = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return transitions, rewards


def random_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    m = rng.standard_normal((n, n))
    return scale * (m @ m.T) / n


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    return random_psd(rng, n, scale) + 0.1 * scale * np.eye(n)


def scalar_prediction(a=0.9, b=0.5, g=1.0, horizon=3):
    """Stacked prediction for a scalar system, built by the package."""
    from quadtrack.dynamics import stack_prediction

    return stack_prediction(
        np.array([[a]]), np.array([[b]]), np.array([[g]]), horizon
    )


def rollout_states(a, b, g, x0, u_seq, w_seq):
    """Test-local recursion oracle x+ = A x + B u + G w (no package code)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    x = np.asarray(x0, dtype=float).reshape(-1)
    out = [x.copy()]
    for u, w in zip(u_seq, w_seq):
        x = a @ x + b @ np.atleast_1d(u) + g @ np.atleast_1d(w)
        out.append(x.copy())
    return np.array(out)
