"""Surrogate-driven training of the Pareto-set model (Monte-Carlo STCH loss)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import as_generator, check_box, sample_simplex
from .psmodel import Gradients, ParetoSetModel
from .scalarize import IdealPoint, StchConfig, stch_value_and_grad, update_ideal

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    n_tasks: int = 20
    n_prefs: int = 10
    n_steps: int = 100
    eta_b: float = 1e-3
    eta_hn: float = 1e-5
    nu: float = 0.01
    beta: float = 0.05
    epsilon: float = 1e-3
    optimizer: str = "sgd"
    ideal_update: str = "archive"

    def __post_init__(self):
        if min(self.n_tasks, self.n_prefs) < 1 or self.n_steps < 0:
            raise ValueError("sample counts must be >= 1 and n_steps >= 0")
        if not (self.eta_b > 0 and self.eta_hn > 0 and self.nu > 0 and self.beta >= 0):
            raise ValueError("learning rates and nu must be positive, beta nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.ideal_update not in ("archive", "running"):
            raise ValueError(f"unknown ideal update {self.ideal_update!r}")


class UniformTasks:
    """Task parameters drawn uniformly from a box."""

    def __init__(self, lb, ub):
        self.lb, self.ub = check_box(lb, ub)

    def sample(self, rng, size):
        gen = as_generator(rng)
        u = gen.random((size, self.lb.size))
        return np.where(self.ub > self.lb, self.lb + u * (self.ub - self.lb), self.lb)


class FixedTasks:
    """Degenerate distribution: every draw equals ``t``."""

    def __init__(self, t):
        self.t = np.atleast_1d(np.asarray(t, dtype=float))

    def sample(self, rng, size):
        return np.tile(self.t, (size, 1))


def mc_loss_and_grads(model: ParetoSetModel, surrogate, ideal: IdealPoint, cfg: TrainConfig,
                      rng, task_dist, samples=None):
    """Monte-Carlo surrogate STCH loss over all task/preference pairs and its gradients.

    ``samples`` may pass frozen ``(T, Lam)`` arrays of shape ``(N_t, p)`` and
    ``(N_lambda, m)``; otherwise they are drawn from ``task_dist`` and the
    uniform simplex.  With ``cfg.ideal_update == "running"`` the ideal point is
    first lowered to cover the LCB predictions of this batch; the (possibly
    updated) ideal is returned as a third element.
    """
    if samples is None:
        T = task_dist.sample(rng, cfg.n_tasks)
        Lam = sample_simplex(rng, model.config.n_obj, cfg.n_prefs)
    else:
        T, Lam = (np.atleast_2d(np.asarray(a, dtype=float)) for a in samples)
    T_rep = np.repeat(T, Lam.shape[0], axis=0)
    L_rep = np.tile(Lam, (T.shape[0], 1))
    S = T_rep.shape[0]

    X, cache = model.forward(L_rep, T_rep, return_cache=True)
    fhat, dfhat = surrogate.lcb(np.hstack([X, T_rep]), cfg.beta, return_grad=True)
    if cfg.ideal_update == "running":
        ideal = IdealPoint(np.minimum(ideal.z_star, fhat.min(axis=0)), ideal.epsilon)
    values, grad_x = stch_value_and_grad(fhat, dfhat[:, :, : X.shape[1]], L_rep, ideal, StchConfig(cfg.nu))
    bad = ~np.isfinite(values) | ~np.all(np.isfinite(grad_x), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise TrainingError(f"non-finite surrogate loss at t={T_rep[i]}, lambda={L_rep[i]}, x={X[i]}")
    grads = model.backward(cache, grad_x / S)
    return float(values.mean()), grads, ideal


class Adam:
    """Adam with separate step sizes for the base and hypernetwork groups."""

    def __init__(self, model, eta_b, eta_hn, b1=0.9, b2=0.999, eps=1e-8):
        self.etas = [eta_b] * len(model.base_parameters()) + [eta_hn] * len(model.hyper_parameters())
        self.b1, self.b2, self.eps = b1, b2, eps
        self.m = None
        self.v = None
        self.k = 0

    def step(self, model: ParetoSetModel, grads: Gradients):
        params = model.base_W + model.base_b + model.hyper_W + model.hyper_b
        gs = grads.base_W + grads.base_b + grads.hyper_W + grads.hyper_b
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.k += 1
        c1 = 1 - self.b1 ** self.k
        c2 = 1 - self.b2 ** self.k
        for p, g, m, v, eta in zip(params, gs, self.m, self.v, self.etas):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= eta * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, model, eta_b, eta_hn):
        self.eta_b, self.eta_hn = eta_b, eta_hn

    def step(self, model, grads):
        model.sgd_step(grads, self.eta_b, self.eta_hn)


def make_optimizer(model, cfg: TrainConfig):
    cls = Adam if cfg.optimizer == "adam" else SGD
    return cls(model, cfg.eta_b, cfg.eta_hn)


def train_phase(model, surrogate, archive, cfg: TrainConfig, rng, task_dist, optimizer=None) -> list:
    """Run ``cfg.n_steps`` stochastic updates; returns the per-step losses.

    The ideal point is taken from ``archive`` once at phase start; it stays
    fixed unless ``cfg.ideal_update == "running"``.  Pass a persistent
    ``optimizer`` to keep its state across phases.
    """
    ideal = update_ideal(archive, cfg.epsilon)
    if optimizer is None:
        optimizer = make_optimizer(model, cfg)
    losses = []
    for _ in range(cfg.n_steps):
        loss, grads, ideal = mc_loss_and_grads(model, surrogate, ideal, cfg, rng, task_dist)
        optimizer.step(model, grads)
        losses.append(loss)
    if losses:
        log.debug("train phase: loss %.6g -> %.6g over %d steps", losses[0], losses[-1], len(losses))
    return losses
