"""Quantile representations of scalar return distributions.

A distribution is approximated by n equally weighted atoms placed at the
quantile midpoint levels tau_i = (2i - 1) / (2n). The projection minimizing
the 1-Wasserstein distance puts atom i at the generalized inverse CDF
evaluated at tau_i.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def quantile_midpoints(n: int) -> np.ndarray:
    """Levels (2i - 1) / (2n), i = 1..n."""
    if n < 1:
        raise ValueError("need at least one quantile")
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


@dataclass
class QuantileDistribution:
    """Equally weighted atoms sorted ascending, one per midpoint level."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("values must be a non-empty vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")
        if np.any(np.diff(self.values) < 0.0):
            raise ValueError("values must be sorted ascending")

    @property
    def taus(self) -> np.ndarray:
        return quantile_midpoints(self.values.size)

    def mean(self) -> float:
        return float(self.values.mean())


def _check_weighted(atoms: np.ndarray, probs: np.ndarray):
    atoms = np.asarray(atoms, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if atoms.shape != probs.shape or atoms.ndim != 1:
        raise ValueError("atoms and probs must be equal-length vectors")
    if np.any(probs < -1e-12) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("probs must be non-negative and sum to one")
    order = np.argsort(atoms, kind="stable")
    return atoms[order], np.clip(probs[order], 0.0, None)


def project_w1(atoms: np.ndarray, probs: np.ndarray, n_quantiles: int) -> np.ndarray:
    """W1-optimal n-quantile projection of a weighted discrete distribution.

    Atom i of the output is F^{-1}((2i-1)/(2n)) with F^{-1} the generalized
    inverse CDF (left-continuous infimum form).
    """
    atoms, probs = _check_weighted(atoms, probs)
    taus = quantile_midpoints(n_quantiles)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, taus, side="left")
    idx = np.minimum(idx, atoms.size - 1)
    return atoms[idx]


def wasserstein_distance(
    atoms1: np.ndarray,
    probs1: np.ndarray,
    atoms2: np.ndarray,
    probs2: np.ndarray,
    p: float = 1.0,
) -> float:
    """W_p distance between two weighted discrete distributions.

    Computed by merging the cumulative-probability breakpoints of both inverse
    CDFs; on each merged segment both inverse CDFs are constant. ``p`` may be
    any value in [1, inf].
    """
    if not (p >= 1.0):
        raise ValueError("p must be >= 1 (or inf)")
    a1, p1 = _check_weighted(atoms1, probs1)
    a2, p2 = _check_weighted(atoms2, probs2)
    c1 = np.cumsum(p1)
    c2 = np.cumsum(p2)
    c1[-1] = c2[-1] = 1.0
    grid = np.union1d(c1, c2)
    lows = np.concatenate([[0.0], grid[:-1]])
    widths = grid - lows
    mids = 0.5 * (grid + lows)
    i1 = np.minimum(np.searchsorted(c1, mids, side="left"), a1.size - 1)
    i2 = np.minimum(np.searchsorted(c2, mids, side="left"), a2.size - 1)
    gaps = np.abs(a1[i1] - a2[i2])
    if np.isinf(p):
        return float(gaps[widths > 0.0].max(initial=0.0))
    return float(np.sum(widths * gaps**p) ** (1.0 / p))


def huber(delta: np.ndarray, kappa: float) -> np.ndarray:
    """Elementwise Huber penalty with threshold ``kappa``."""
    a = np.abs(delta)
    return np.where(a <= kappa, 0.5 * delta * delta, kappa * (a - 0.5 * kappa))


def quantile_huber_loss(
    predicted: np.ndarray,
    targets: np.ndarray,
    kappa: float = 1.0,
    with_grad: bool = False,
):
    """Asymmetric Huber quantile-regression loss.

    loss = (1/n) sum_i sum_j |tau_i - 1{d_ij < 0}| * Huber_kappa(d_ij) / kappa
    with d_ij = targets_j - predicted_i and tau_i the midpoint levels of the
    predicted atoms. With ``with_grad`` the exact gradient w.r.t. ``predicted``
    is returned as well.
    """
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    q = np.asarray(predicted, dtype=float)
    y = np.asarray(targets, dtype=float)
    if q.ndim != 1 or y.ndim != 1:
        raise ValueError("predicted and targets must be vectors")
    taus = quantile_midpoints(q.size)
    delta = y[None, :] - q[:, None]
    weight = np.abs(taus[:, None] - (delta < 0.0))
    loss = float(np.sum(weight * huber(delta, kappa)) / (kappa * q.size))
    if not with_grad:
        return loss
    dh = np.clip(delta, -kappa, kappa)
    grad = -np.sum(weight * dh, axis=1) / (kappa * q.size)
    return loss, grad


def batch_quantile_huber(
    predicted: np.ndarray,
    targets: np.ndarray,
    kappa: float = 1.0,
):
    """Batched version used by the critic update.

    ``predicted``/``targets`` are (batch, n)/(batch, m). Returns the mean
    per-sample loss and the gradient w.r.t. ``predicted`` of that mean.
    """
    q = np.asarray(predicted, dtype=float)
    y = np.asarray(targets, dtype=float)
    taus = quantile_midpoints(q.shape[1])
    delta = y[:, None, :] - q[:, :, None]
    weight = np.abs(taus[None, :, None] - (delta < 0.0))
    n = q.shape[1]
    loss = float(np.sum(weight * huber(delta, kappa)) / (kappa * n * q.shape[0]))
    dh = np.clip(delta, -kappa, kappa)
    grad = -np.sum(weight * dh, axis=2) / (kappa * n * q.shape[0])
    return loss, grad
