"""Quantile-critic actor-critic disturbance estimator.

The agent observes the tracking deviation plus the measured wind and emits a
horizon-long forecast of the unmodeled disturbance (world-frame acceleration
blocks, bounded per axis). A deterministic actor proposes the forecast; a
quantile critic models the return distribution of (state, forecast) pairs;
a small option head scores a few quantile windows (full distribution, lower
half, middle, upper half) and an epsilon-greedy option scheduler picks which
window the actor ascends, so exploration can lean pessimistic or optimistic
instead of always chasing the mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import (
    AdamState,
    Mlp,
    adam_step,
    load_tensors,
    mlp_from_tensors,
    mlp_tensors,
    save_tensors,
    soft_update,
)
from .quantiles import batch_quantile_huber


def reward(x, x_ref, u, h1, h2) -> float:
    """Quadratic tracking reward -(x - x_ref)' H1 (x - x_ref) - u' H2 u.

    ``h1``/``h2`` are the positive diagonals of the weight matrices; zero only
    at perfect tracking with zero input.
    """
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if h1.ndim != 1 or h2.ndim != 1 or np.any(h1 <= 0.0) or np.any(h2 <= 0.0):
        raise ValueError("h1 and h2 must be positive diagonals")
    dx = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
    u = np.asarray(u, dtype=float)
    if dx.size != h1.size or u.size != h2.size:
        raise ValueError("weight lengths must match state/input lengths")
    return float(-(dx * h1 * dx).sum() - (u * h2 * u).sum())


# Stage weights used across the stack: position, velocity, attitude
# quaternion, body rates; and the four rotor inputs.
DEFAULT_H1 = np.array([2.5e-2] * 3 + [1e-3] * 3 + [2.5e-3] * 4 + [1e-5] * 3)
DEFAULT_H2 = np.array([1.25e-4] * 4)


@dataclass(frozen=True)
class OptionSet:
    """Quantile windows the option scheduler can hand to the actor update.

    Each window is (start, width) into the sorted quantile vector. The
    default quarters the distribution: everything, lower half, middle half,
    upper half.
    """

    windows: tuple
    n_quantiles: int

    def __post_init__(self) -> None:
        if not self.windows:
            raise ValueError("need at least one option window")
        for start, width in self.windows:
            if width < 1 or start < 0 or start + width > self.n_quantiles:
                raise ValueError("option window outside the quantile vector")

    @staticmethod
    def default(n_quantiles: int) -> "OptionSet":
        if n_quantiles < 4:
            return OptionSet(((0, n_quantiles),), n_quantiles)
        half = n_quantiles // 2
        quarter = n_quantiles // 4
        return OptionSet(
            (
                (0, n_quantiles),
                (0, half),
                (quarter, half),
                (half, half),
            ),
            n_quantiles,
        )

    @staticmethod
    def mean_only(n_quantiles: int) -> "OptionSet":
        """Single full-window option: the mean-critic ablation."""
        return OptionSet(((0, n_quantiles),), n_quantiles)

    def __len__(self) -> int:
        return len(self.windows)


class ReplayBuffer:
    """Uniform-sampling ring buffer with lazily grown storage."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._alloc = 0
        self._size = 0
        self._head = 0
        self.s = self.a = self.r = self.s_next = self.z = None

    def _grow(self, needed: int) -> None:
        new_alloc = min(self.capacity, max(1024, 2 * self._alloc, needed))
        if new_alloc <= self._alloc:
            return

        def grow(arr, width):
            fresh = np.empty((new_alloc, width) if width else new_alloc)
            if arr is not None:
                fresh[: self._size] = arr[: self._size]
            return fresh

        self.s = grow(self.s, self.state_dim)
        self.a = grow(self.a, self.action_dim)
        self.r = grow(self.r, 0)
        self.s_next = grow(self.s_next, self.state_dim)
        z_fresh = np.empty(new_alloc, dtype=np.int64)
        if self.z is not None:
            z_fresh[: self._size] = self.z[: self._size]
        self.z = z_fresh
        self._alloc = new_alloc

    def add(self, s, a, r, s_next, option: int) -> None:
        if self._head >= self._alloc and self._alloc < self.capacity:
            self._grow(self._head + 1)
        i = self._head
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.z[i] = option
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def __len__(self) -> int:
        return self._size

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return {
            "s": self.s[idx],
            "a": self.a[idx],
            "r": self.r[idx],
            "s_next": self.s_next[idx],
            "z": self.z[idx],
        }


class RunningNorm:
    """Welford running mean/std used to whiten observations."""

    def __init__(self, dim: int):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x: np.ndarray) -> None:
        self.count += 1.0
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def std(self) -> np.ndarray:
        if self.count < 2.0:
            return np.ones_like(self.mean)
        return np.sqrt(np.maximum(self.m2 / self.count, 1e-8))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std()


@dataclass
class AgentConfig:
    state_dim: int
    action_dim: int
    n_quantiles: int = 32
    kappa: float = 1.0
    hidden: tuple = (128, 128)
    gamma: float = 0.998
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    option_lr: float = 1e-3
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    tau: float = 0.005
    beta: float = 0.1
    eps_start: float = 1.0
    eps_final: float = 0.05
    eps_anneal_frac: float = 0.3
    noise_std: float = 0.3
    action_bound: float = 3.0
    warmup: int = 500
    xi: float = 1e-3
    loss_window: int = 100
    seed: int = 0
    multi_option: bool = True

    def option_set(self) -> OptionSet:
        if self.multi_option:
            return OptionSet.default(self.n_quantiles)
        return OptionSet.mean_only(self.n_quantiles)


@dataclass
class Transition:
    """One interaction record; ``option`` is the window active at time t."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    option: int = 0


class EstimatorAgent:
    """Actor, quantile critic, option head, their targets and optimizers."""

    def __init__(self, config: AgentConfig):
        self.config = config
        self.options = config.option_set()
        self.rng = np.random.default_rng(config.seed)
        c = config
        self.actor = Mlp(
            (c.state_dim, *c.hidden, c.action_dim),
            self.rng,
            out="tanh",
            out_scale=c.action_bound,
        )
        self.critic = Mlp((c.state_dim + c.action_dim, *c.hidden, c.n_quantiles), self.rng)
        self.option_net = Mlp((c.state_dim, *c.hidden, len(self.options)), self.rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.target_option = self.option_net.copy()
        self.actor_opt = AdamState.for_params(self.actor.params)
        self.critic_opt = AdamState.for_params(self.critic.params)
        self.option_opt = AdamState.for_params(self.option_net.params)
        self.norm = RunningNorm(c.state_dim)
        self.buffer = ReplayBuffer(c.buffer_capacity, c.state_dim, c.action_dim)

    # -- schedules ---------------------------------------------------------
    def epsilon(self, progress: float) -> float:
        c = self.config
        frac = min(max(progress, 0.0), 1.0)
        if frac >= c.eps_anneal_frac:
            return c.eps_final
        ramp = frac / max(c.eps_anneal_frac, 1e-12)
        return c.eps_start + ramp * (c.eps_final - c.eps_start)

    def noise_scale(self, progress: float) -> float:
        return self.config.noise_std * max(0.0, 1.0 - min(max(progress, 0.0), 1.0))

    # -- acting ------------------------------------------------------------
    def act(self, s: np.ndarray, explore: bool = False, progress: float = 1.0) -> np.ndarray:
        """Bounded forecast for one observation; optional clipped Gaussian noise."""
        a = self.actor(self.norm.normalize(np.asarray(s, dtype=float)))
        if explore:
            a = a + self.rng.normal(0.0, self.noise_scale(progress), size=a.shape)
        return np.clip(a, -self.config.action_bound, self.config.action_bound)

    def select_option(self, s: np.ndarray, previous: int | None, progress: float = 1.0) -> int:
        """Sticky epsilon-greedy option choice over the option head."""
        c = self.config
        if previous is not None and self.rng.uniform() >= c.beta:
            return previous
        if self.rng.uniform() < self.epsilon(progress):
            return int(self.rng.integers(0, len(self.options)))
        values = self.option_net(self.norm.normalize(np.asarray(s, dtype=float)))
        return int(np.argmax(values))

    def option_values(self, s: np.ndarray) -> np.ndarray:
        return self.option_net(self.norm.normalize(np.asarray(s, dtype=float)))

    # -- learning ----------------------------------------------------------
    def _critic_input(self, s_norm: np.ndarray, a: np.ndarray) -> np.ndarray:
        return np.concatenate([s_norm, a / self.config.action_bound], axis=-1)

    def critic_update(self, batch: dict) -> tuple[float, float]:
        """Distributional TD step plus the option-value regression.

        Quantile targets bootstrap through the target critic at the target
        actor's action; the option head regresses on the beta-mixed bootstrap
        of max/current option values. Returns (quantile loss, option loss).
        """
        c = self.config
        s_n = self.norm.normalize(batch["s"])
        s2_n = self.norm.normalize(batch["s_next"])
        r = batch["r"]
        z = batch["z"]
        bsz = s_n.shape[0]

        a2 = self.target_actor(s2_n)
        q_next = self.target_critic(self._critic_input(s2_n, a2))
        targets = r[:, None] + c.gamma * q_next

        q_pred, tape = self.critic.forward(self._critic_input(s_n, batch["a"]))
        loss, grad_q = batch_quantile_huber(q_pred, targets, c.kappa)
        grads, _ = self.critic.backward(tape, grad_q)
        adam_step(self.critic.params, grads, self.critic_opt, c.critic_lr)

        opt_next = self.target_option(s2_n)
        mixed = c.beta * opt_next.max(axis=1) + (1.0 - c.beta) * opt_next[np.arange(bsz), z]
        y_opt = r + c.gamma * mixed
        opt_pred, tape_o = self.option_net.forward(s_n)
        err = opt_pred[np.arange(bsz), z] - y_opt
        grad_o = np.zeros_like(opt_pred)
        grad_o[np.arange(bsz), z] = 2.0 * err / bsz
        grads_o, _ = self.option_net.backward(tape_o, grad_o)
        adam_step(self.option_net.params, grads_o, self.option_opt, c.option_lr)
        return loss, float(np.mean(err * err))

    def actor_update(self, batch: dict, option: int) -> float:
        """Ascend the mean of the critic quantiles inside the active window."""
        c = self.config
        start, width = self.options.windows[option]
        s_n = self.norm.normalize(batch["s"])
        bsz = s_n.shape[0]

        a_pi, tape_a = self.actor.forward(s_n)
        q, tape_c = self.critic.forward(self._critic_input(s_n, a_pi))
        grad_q = np.zeros_like(q)
        grad_q[:, start : start + width] = -1.0 / (bsz * width)
        _, grad_in = self.critic.backward(tape_c, grad_q)
        grad_a = grad_in[:, c.state_dim :] / c.action_bound
        grads_a, _ = self.actor.backward(tape_a, grad_a)
        adam_step(self.actor.params, grads_a, self.actor_opt, c.actor_lr)

        soft_update(self.target_actor.params, self.actor.params, c.tau)
        soft_update(self.target_critic.params, self.critic.params, c.tau)
        soft_update(self.target_option.params, self.option_net.params, c.tau)
        return float(q[:, start : start + width].mean())

    # -- persistence -------------------------------------------------------
    def save(self, path) -> None:
        c = self.config
        tensors = {}
        tensors.update(mlp_tensors(self.actor, "actor"))
        tensors.update(mlp_tensors(self.critic, "critic"))
        tensors.update(mlp_tensors(self.option_net, "option"))
        tensors["norm/mean"] = self.norm.mean
        tensors["norm/m2"] = self.norm.m2
        tensors["norm/count"] = np.array(self.norm.count)
        meta = {
            "state_dim": c.state_dim,
            "action_dim": c.action_dim,
            "n_quantiles": c.n_quantiles,
            "hidden": list(c.hidden),
            "action_bound": c.action_bound,
            "multi_option": c.multi_option,
            "gamma": c.gamma,
        }
        save_tensors(path, tensors, meta)

    @staticmethod
    def load(path) -> "EstimatorAgent":
        tensors, meta = load_tensors(path)
        config = AgentConfig(
            state_dim=int(meta["state_dim"]),
            action_dim=int(meta["action_dim"]),
            n_quantiles=int(meta["n_quantiles"]),
            hidden=tuple(meta["hidden"]),
            action_bound=float(meta["action_bound"]),
            multi_option=bool(meta["multi_option"]),
            gamma=float(meta.get("gamma", 0.998)),
        )
        agent = EstimatorAgent(config)
        dims_a = (config.state_dim, *config.hidden, config.action_dim)
        dims_c = (config.state_dim + config.action_dim, *config.hidden, config.n_quantiles)
        dims_o = (config.state_dim, *config.hidden, len(agent.options))
        agent.actor = mlp_from_tensors(tensors, "actor", dims_a, out="tanh", out_scale=config.action_bound)
        agent.critic = mlp_from_tensors(tensors, "critic", dims_c)
        agent.option_net = mlp_from_tensors(tensors, "option", dims_o)
        agent.target_actor = agent.actor.copy()
        agent.target_critic = agent.critic.copy()
        agent.target_option = agent.option_net.copy()
        agent.norm.mean = np.array(tensors["norm/mean"], dtype=float)
        agent.norm.m2 = np.array(tensors["norm/m2"], dtype=float)
        agent.norm.count = float(tensors["norm/count"])
        return agent


@dataclass
class CurvePoint:
    episode: int
    ep_return: float
    critic_loss: float
    actor_loss: float


def train(
    agent: EstimatorAgent,
    env,
    episodes: int,
    update_every: int = 1,
    progress_hook=None,
) -> list[CurvePoint]:
    """Interact, store, update; returns the learning curve.

    ``env`` must expose ``reset() -> s``, ``step(a) -> (s_next, r, done)`` and
    ``episode_len``. Training stops early once the moving average of the
    critic loss over the last ``loss_window`` updates falls below ``xi``.
    """
    c = agent.config
    total_steps = max(1, episodes * env.episode_len)
    curve: list[CurvePoint] = []
    recent_losses: list[float] = []
    global_step = 0
    stop = False

    for episode in range(episodes):
        s = env.reset()
        option = None
        ep_return = 0.0
        ep_closses: list[float] = []
        ep_alosses: list[float] = []
        for _ in range(env.episode_len):
            progress = global_step / total_steps
            option = agent.select_option(s, option, progress)
            a = agent.act(s, explore=True, progress=progress)
            s_next, r, done = env.step(a)
            agent.norm.update(s)
            agent.buffer.add(s, a, r, s_next, option)
            ep_return += r
            s = s_next
            global_step += 1

            if len(agent.buffer) >= max(c.warmup, c.batch_size) and global_step % update_every == 0:
                batch = agent.buffer.sample(c.batch_size, agent.rng)
                closs, _ = agent.critic_update(batch)
                aloss = agent.actor_update(batch, option)
                ep_closses.append(closs)
                ep_alosses.append(aloss)
                recent_losses.append(closs)
                if len(recent_losses) > c.loss_window:
                    recent_losses.pop(0)
                    if np.mean(recent_losses) < c.xi:
                        stop = True
            if done:
                break
        curve.append(
            CurvePoint(
                episode,
                ep_return,
                float(np.mean(ep_closses)) if ep_closses else np.nan,
                float(np.mean(ep_alosses)) if ep_alosses else np.nan,
            )
        )
        if progress_hook is not None:
            progress_hook(curve[-1])
        if stop:
            break
    return curve
