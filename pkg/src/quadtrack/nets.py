"""Minimal numpy neural-network kit: MLPs with exact reverse-mode gradients,
Adam, Polyak averaging, and a named-tensor checkpoint format.

Everything here is float64 and deterministic given the caller's Generator.
Parameters live in plain lists of arrays ordered [W0, b0, W1, b1, ...] so an
optimizer state can mirror them index-for-index.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = 1


class Mlp:
    """Fully connected net with tanh hidden layers.

    Parameters
    ----------
    dims : sequence of int
        Layer widths including input and output, e.g. (16, 128, 128, 32).
    rng : np.random.Generator
        Source for the fan-in uniform init.
    out : {"linear", "tanh"}
        Output head. "tanh" squashes to (-out_scale, out_scale).
    out_scale : float
        Scale of the tanh head; ignored for linear output.
    final_init : float
        Half-width of the uniform init for the last layer (small values keep
        initial outputs near zero, the usual actor-critic choice).
    """

    def __init__(self, dims, rng, out="linear", out_scale=1.0, final_init=3e-3):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if out not in ("linear", "tanh"):
            raise ValueError("out must be 'linear' or 'tanh'")
        self.dims = tuple(int(d) for d in dims)
        self.out = out
        self.out_scale = float(out_scale)
        self.params: list[np.ndarray] = []
        last = len(dims) - 2
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = final_init if i == last else 1.0 / np.sqrt(d_in)
            self.params.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
            self.params.append(rng.uniform(-bound, bound, size=d_out))

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def forward(self, x: np.ndarray):
        """Evaluate the net; returns (output, tape) with the tape holding the
        per-layer activations needed by :meth:`backward`.

        ``x`` may be (d,) or (batch, d); the output mirrors that shape.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.dims[0]:
            raise ValueError(f"expected input dim {self.dims[0]}, got {h.shape[1]}")
        acts = [h]
        for layer in range(self.n_layers):
            w = self.params[2 * layer]
            b = self.params[2 * layer + 1]
            z = h @ w.T + b
            if layer < self.n_layers - 1:
                h = np.tanh(z)
            elif self.out == "tanh":
                h = self.out_scale * np.tanh(z)
            else:
                h = z
            acts.append(h)
        y = acts[-1][0] if single else acts[-1]
        return y, acts

    def backward(self, tape, grad_out: np.ndarray):
        """Exact gradients of sum(grad_out * output) w.r.t. params and input.

        Returns (param_grads, grad_input) with param_grads ordered like
        ``self.params``.
        """
        g = np.asarray(grad_out, dtype=float)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        grads: list[np.ndarray] = [None] * len(self.params)
        for layer in range(self.n_layers - 1, -1, -1):
            h_out = tape[layer + 1]
            h_in = tape[layer]
            if layer == self.n_layers - 1:
                if self.out == "tanh":
                    t = h_out / self.out_scale
                    g = g * self.out_scale * (1.0 - t * t)
            else:
                g = g * (1.0 - h_out * h_out)
            w = self.params[2 * layer]
            grads[2 * layer] = g.T @ h_in
            grads[2 * layer + 1] = g.sum(axis=0)
            g = g @ w
        return grads, (g[0] if single else g)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def copy(self) -> "Mlp":
        dup = object.__new__(Mlp)
        dup.dims = self.dims
        dup.out = self.out
        dup.out_scale = self.out_scale
        dup.params = [p.copy() for p in self.params]
        return dup


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @staticmethod
    def for_params(params) -> "AdamState":
        return AdamState(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
        )


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """In-place Adam update; returns (params, state) for convenience."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must align")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError("gradient shape mismatch")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def soft_update(target_params, online_params, tau: float) -> None:
    """Polyak averaging: target <- (1 - tau) target + tau online, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for t, o in zip(target_params, online_params):
        t *= 1.0 - tau
        t += tau * o


def save_tensors(path, tensors: dict, meta: dict | None = None) -> None:
    """Write named tensors + JSON metadata to an .npz checkpoint.

    Layout: one array per name (row-major, shapes preserved by numpy) plus a
    ``__meta__`` JSON string holding at least a ``version`` field.
    """
    meta = dict(meta or {})
    meta.setdefault("version", CHECKPOINT_VERSION)
    payload = {k: np.asarray(v) for k, v in tensors.items()}
    payload["__meta__"] = np.array(json.dumps(meta))
    np.savez(path, **payload)


def load_tensors(path) -> tuple[dict, dict]:
    """Read a checkpoint written by :func:`save_tensors`; returns (tensors, meta)."""
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise ValueError(f"{path}: not a recognised checkpoint (missing metadata)")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        tensors = {k: data[k] for k in data.files if k != "__meta__"}
    return tensors, meta


def mlp_tensors(net: Mlp, prefix: str) -> dict:
    """Flatten an Mlp into named tensors for checkpointing."""
    out = {}
    for i in range(net.n_layers):
        out[f"{prefix}/w{i}"] = net.params[2 * i]
        out[f"{prefix}/b{i}"] = net.params[2 * i + 1]
    return out


def mlp_from_tensors(tensors: dict, prefix: str, dims, out="linear", out_scale=1.0) -> Mlp:
    """Rebuild an Mlp from checkpoint tensors."""
    net = object.__new__(Mlp)
    net.dims = tuple(int(d) for d in dims)
    net.out = out
    net.out_scale = float(out_scale)
    net.params = []
    for i in range(len(net.dims) - 1):
        try:
            w = np.array(tensors[f"{prefix}/w{i}"], dtype=float)
            b = np.array(tensors[f"{prefix}/b{i}"], dtype=float)
        except KeyError as exc:
            raise ValueError(f"checkpoint missing tensor {exc} for net '{prefix}'") from exc
        net.params.extend([w, b])
    return net
