"""Parametric Pareto-set model: a preference-conditioned MLP whose weight
matrices are shifted by low-rank updates generated from the task parameter.

For layer ``l`` the effective weight is ``W0[l] + B[l](t) @ A[l](t)`` where the
factors ``B`` (d x r) and ``A`` (r x k) come out of a hypernetwork fed with
``t``.  Hidden layers use ReLU; the output goes through a sigmoid and is
mapped affinely onto the decision box, so every prediction is feasible.

Gradients are hand-rolled: :meth:`ParetoSetModel.forward` returns a cache,
:meth:`ParetoSetModel.backward` turns an upstream ``dL/dx`` into gradients
for the base weights and the hypernetwork weights.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DimensionError, StateError, as_generator


def default_hidden(n_obj: int) -> tuple:
    return (512, 512) if n_obj <= 2 else (256, 256, 256)


@dataclass
class PsModelConfig:
    n_obj: int
    n_var: int
    n_param: int
    x_bounds: tuple
    hidden: Optional[tuple] = None
    rank: int = 3
    hyper_hidden: tuple = (1024, 1024, 1024, 1024)
    t_bounds: Optional[tuple] = None

    def __post_init__(self):
        if self.hidden is None:
            self.hidden = default_hidden(self.n_obj)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.hyper_hidden = tuple(int(h) for h in self.hyper_hidden)
        lb, ub = (np.asarray(b, dtype=float) for b in self.x_bounds)
        if lb.shape != (self.n_var,) or ub.shape != (self.n_var,):
            raise DimensionError("decision box does not match n_var")
        self.x_bounds = (lb, ub)
        if self.t_bounds is not None:
            self.t_bounds = tuple(np.asarray(b, dtype=float).reshape(self.n_param) for b in self.t_bounds)
        if self.rank < 1:
            raise ValueError("LoRA rank must be >= 1")
        if min(self.hidden + self.hyper_hidden + (self.n_obj, self.n_var, self.n_param)) < 1:
            raise ValueError("all layer widths must be >= 1")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(out_dim, in_dim) per layer of the base network."""
        sizes = (self.n_obj,) + self.hidden + (self.n_var,)
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    @property
    def layer_ranks(self) -> list[int]:
        return [min(self.rank, d, k) for d, k in self.layer_dims]

    @property
    def lora_size(self) -> int:
        return sum(r * (d + k) for (d, k), r in zip(self.layer_dims, self.layer_ranks))

    def to_dict(self):
        return {"n_obj": self.n_obj, "n_var": self.n_var, "n_param": self.n_param,
                "x_bounds": [b.tolist() for b in self.x_bounds], "hidden": list(self.hidden),
                "rank": self.rank, "hyper_hidden": list(self.hyper_hidden),
                "t_bounds": None if self.t_bounds is None else [b.tolist() for b in self.t_bounds]}


@dataclass
class Gradients:
    base_W: list
    base_b: list
    hyper_W: list
    hyper_b: list

    def arrays(self):
        return self.base_W + self.base_b + self.hyper_W + self.hyper_b

    def scaled(self, c):
        return Gradients(*[[c * a for a in group] for group in
                           (self.base_W, self.base_b, self.hyper_W, self.hyper_b)])

    def __add__(self, other):
        return Gradients(*[[a + b for a, b in zip(g1, g2)] for g1, g2 in
                           zip((self.base_W, self.base_b, self.hyper_W, self.hyper_b),
                               (other.base_W, other.base_b, other.hyper_W, other.hyper_b))])


@dataclass
class ForwardCache:
    lam: np.ndarray
    idx: np.ndarray
    n_tasks: int
    hyper_acts: list           # hypernetwork inputs to each layer (post-activation)
    factors: list              # per layer (B (U,d,r), A (U,r,k))
    inputs: list               # base layer inputs h_{l-1}, (S, k)
    pre: list                  # base pre-activations, (S, d)
    proj: list                 # A h per sample, (S, r)
    sig: np.ndarray = field(default=None)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class ParetoSetModel:
    """Base MLP ``h(lambda)`` plus a hypernetwork producing per-layer LoRA factors from ``t``."""

    def __init__(self, config: PsModelConfig, base_W, base_b, hyper_W, hyper_b):
        self.config = config
        self.base_W = base_W
        self.base_b = base_b
        self.hyper_W = hyper_W
        self.hyper_b = hyper_b
        if hyper_W[-1].shape[0] != config.lora_size:
            raise DimensionError("hypernetwork output does not match LoRA factor size")

    # ------------------------------------------------------------------ init

    @classmethod
    def init(cls, config: PsModelConfig, rng=None) -> "ParetoSetModel":
        """Fan-in uniform init; the hypernetwork rows emitting ``B`` start at
        zero so every ``B @ A`` is zero and the model starts t-independent."""
        gen = as_generator(rng)

        def uniform(d, k):
            s = 1.0 / np.sqrt(k)
            return gen.uniform(-s, s, (d, k)), gen.uniform(-s, s, d)

        base_W, base_b = zip(*[uniform(d, k) for d, k in config.layer_dims])
        sizes = (config.n_param,) + config.hyper_hidden
        hyper = [uniform(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
        hyper_W = [w for w, _ in hyper]
        hyper_b = [b for _, b in hyper]

        k_h = sizes[-1]
        W_out = np.zeros((config.lora_size, k_h))
        b_out = np.zeros(config.lora_size)
        off = 0
        for (d, k), r in zip(config.layer_dims, config.layer_ranks):
            off += d * r  # B rows stay zero
            sa = 1.0 / np.sqrt(k)
            W_out[off:off + r * k] = gen.uniform(-1.0, 1.0, (r * k, k_h)) * (sa / np.sqrt(k_h))
            b_out[off:off + r * k] = gen.uniform(-sa, sa, r * k)
            off += r * k
        hyper_W.append(W_out)
        hyper_b.append(b_out)
        return cls(config, list(base_W), list(base_b), hyper_W, hyper_b)

    # ----------------------------------------------------------- hypernet

    def _hyper_forward(self, T):
        acts = [T]
        h = T
        last = len(self.hyper_W) - 1
        for i, (W, b) in enumerate(zip(self.hyper_W, self.hyper_b)):
            z = h @ W.T + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def _split(self, H):
        """Hypernetwork outputs (U, size) -> per layer (B (U,d,r), A (U,r,k))."""
        out = []
        off = 0
        U = H.shape[0]
        for (d, k), r in zip(self.config.layer_dims, self.config.layer_ranks):
            B = H[:, off:off + d * r].reshape(U, d, r)
            off += d * r
            A = H[:, off:off + r * k].reshape(U, r, k)
            off += r * k
            out.append((B, A))
        return out

    def lora_factors(self, t) -> list:
        T = self._check_tasks(t)
        return [(B[0], A[0]) for B, A in self._split(self._hyper_forward(T[:1])[-1])]

    def effective_weights(self, t) -> list:
        """Per-layer ``W0 + B(t) @ A(t)`` for a single task parameter."""
        return [W + B @ A for W, (B, A) in zip(self.base_W, self.lora_factors(t))]

    def _check_tasks(self, t):
        T = np.atleast_2d(np.asarray(t, dtype=float))
        if T.shape[-1] != self.config.n_param:
            raise DimensionError(f"task parameter has length {T.shape[-1]}, expected {self.config.n_param}")
        return T

    # ------------------------------------------------------------ forward

    def forward(self, lam, t, return_cache=False):
        """Decision vectors for preference rows ``lam`` at task rows ``t``.

        ``t`` may be a single task (shared by all rows) or one row per sample.
        """
        lam = np.atleast_2d(np.asarray(lam, dtype=float))
        if lam.shape[1] != self.config.n_obj:
            raise DimensionError(f"preference has length {lam.shape[1]}, expected {self.config.n_obj}")
        T = self._check_tasks(t)
        S = lam.shape[0]
        if T.shape[0] == 1:
            tasks, idx = T, np.zeros(S, dtype=int)
        elif T.shape[0] == S:
            tasks, idx = np.unique(T, axis=0, return_inverse=True)
            idx = idx.ravel()
        else:
            raise DimensionError("need one task row or one per preference row")

        acts = self._hyper_forward(tasks)
        factors = self._split(acts[-1])
        U = tasks.shape[0]
        if U == 1 and not return_cache:
            return self._forward_folded(lam, factors)
        h = lam
        inputs, pre, proj = [], [], []
        n_layers = len(self.base_W)
        for l, (W, b, (B, A)) in enumerate(zip(self.base_W, self.base_b, factors)):
            inputs.append(h)
            if U == 1:
                q = h @ A[0].T
                z = h @ W.T + b + q @ B[0].T
            else:
                q = np.einsum("sk,srk->sr", h, A[idx])
                z = h @ W.T + b + np.einsum("sr,sdr->sd", q, B[idx])
            proj.append(q)
            pre.append(z)
            h = np.maximum(z, 0.0) if l < n_layers - 1 else z
        sig = _sigmoid(h)
        lb, ub = self.config.x_bounds
        X = lb + (ub - lb) * sig
        if not return_cache:
            return X
        return X, ForwardCache(lam, idx, U, acts, factors, inputs, pre, proj, sig)

    def _forward_folded(self, lam, factors, dtype=np.float64):
        # one task: fold B A into the weight, reuse buffers
        h = lam.astype(dtype)
        n_layers = len(self.base_W)
        for l, (W, b, (B, A)) in enumerate(zip(self.base_W, self.base_b, factors)):
            h = h @ (W + B[0] @ A[0]).T.astype(dtype)
            h += b.astype(dtype)
            if l < n_layers - 1:
                np.maximum(h, 0.0, out=h)
        lb, ub = self.config.x_bounds
        return lb + (ub - lb) * _sigmoid(h.astype(np.float64))

    def infer(self, lam, t):
        """Fast front inference for a single task, computed in float32.

        Agrees with ``forward`` to single precision; use ``forward`` where
        exact agreement with training-time outputs matters.
        """
        lam = np.atleast_2d(np.asarray(lam, dtype=float))
        if lam.shape[1] != self.config.n_obj:
            raise DimensionError(f"preference has length {lam.shape[1]}, expected {self.config.n_obj}")
        T = self._check_tasks(t)
        if T.shape[0] != 1:
            raise DimensionError("infer takes a single task")
        factors = self._split(self._hyper_forward(T)[-1])
        return self._forward_folded(lam, factors, np.float32)

    def predict(self, lam, t):
        return self.forward(lam, t)

    # ----------------------------------------------------------- backward

    def backward(self, cache: Optional[ForwardCache], grad_x) -> Gradients:
        """Reverse pass: gradients of ``sum_s grad_x[s] . x[s]`` w.r.t. all weights."""
        if cache is None:
            raise StateError("backward needs the cache of a forward pass")
        grad_x = np.atleast_2d(np.asarray(grad_x, dtype=float))
        lb, ub = self.config.x_bounds
        delta = grad_x * (ub - lb) * cache.sig * (1.0 - cache.sig)
        idx, U = cache.idx, cache.n_tasks
        onehot = np.zeros((U, idx.size))
        onehot[idx, np.arange(idx.size)] = 1.0

        n_layers = len(self.base_W)
        gW = [None] * n_layers
        gb = [None] * n_layers
        dH_parts = [None] * n_layers
        for l in range(n_layers - 1, -1, -1):
            h = cache.inputs[l]
            q = cache.proj[l]
            B, A = cache.factors[l]
            gW[l] = delta.T @ h
            gb[l] = delta.sum(axis=0)
            if U == 1:
                p = delta @ B[0]                      # (S, r)
                dB = (delta.T @ q)[None]              # (1, d, r)
                dA = (p.T @ h)[None]                  # (1, r, k)
                dh = delta @ self.base_W[l] + p @ A[0]
            else:
                p = np.einsum("sd,sdr->sr", delta, B[idx])
                dB = np.einsum("us,sd,sr->udr", onehot, delta, q, optimize=True)
                dA = np.einsum("us,sr,sk->urk", onehot, p, h, optimize=True)
                dh = delta @ self.base_W[l] + np.einsum("sr,srk->sk", p, A[idx])
            dH_parts[l] = np.concatenate([dB.reshape(U, -1), dA.reshape(U, -1)], axis=1)
            if l > 0:
                delta = dh * (cache.pre[l - 1] > 0)
        dH = np.concatenate(dH_parts, axis=1)

        hW = [None] * len(self.hyper_W)
        hb = [None] * len(self.hyper_W)
        g = dH
        for i in range(len(self.hyper_W) - 1, -1, -1):
            a_in = cache.hyper_acts[i]
            hW[i] = g.T @ a_in
            hb[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.hyper_W[i]) * (cache.hyper_acts[i] > 0)
        return Gradients(gW, gb, hW, hb)

    # ------------------------------------------------------------ updates

    def sgd_step(self, grads: Gradients, eta_b=1e-3, eta_hn=1e-5):
        for group, g_group, eta in ((self.base_W, grads.base_W, eta_b), (self.base_b, grads.base_b, eta_b),
                                    (self.hyper_W, grads.hyper_W, eta_hn), (self.hyper_b, grads.hyper_b, eta_hn)):
            if len(group) != len(g_group):
                raise DimensionError("gradient structure does not match the model")
            for w, g in zip(group, g_group):
                if w.shape != g.shape:
                    raise DimensionError(f"gradient shape {g.shape} does not match weight {w.shape}")
                w -= eta * g

    def parameters(self):
        return self.base_W + self.base_b + self.hyper_W + self.hyper_b

    def base_parameters(self):
        return self.base_W + self.base_b

    def hyper_parameters(self):
        return self.hyper_W + self.hyper_b

    def copy(self) -> "ParetoSetModel":
        return ParetoSetModel(self.config, [w.copy() for w in self.base_W], [b.copy() for b in self.base_b],
                              [w.copy() for w in self.hyper_W], [b.copy() for b in self.hyper_b])

    # ------------------------------------------------------- persistence

    def to_dict(self):
        return {"config": self.config.to_dict(),
                "base_W": [encode_array(a) for a in self.base_W],
                "base_b": [encode_array(a) for a in self.base_b],
                "hyper_W": [encode_array(a) for a in self.hyper_W],
                "hyper_b": [encode_array(a) for a in self.hyper_b]}

    @classmethod
    def from_dict(cls, data):
        cfg = dict(data["config"])
        cfg["x_bounds"] = tuple(np.asarray(b, dtype=float) for b in cfg["x_bounds"])
        config = PsModelConfig(**cfg)
        return cls(config, *[[decode_array(a) for a in data[k]] for k in ("base_W", "base_b", "hyper_W", "hyper_b")])


def encode_array(a: np.ndarray) -> dict:
    """Bit-exact JSON-safe array encoding (little-endian float64, base64)."""
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "<f8", "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).copy()
