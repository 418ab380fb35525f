"""Tchebycheff and smooth Tchebycheff scalarizations with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EvaluationArchive, StateError


@dataclass(frozen=True)
class IdealPoint:
    z_star: np.ndarray
    epsilon: float = 1e-3

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "z_star", np.asarray(self.z_star, dtype=float))

    @property
    def shifted(self) -> np.ndarray:
        return self.z_star - self.epsilon


@dataclass(frozen=True)
class StchConfig:
    nu: float = 0.01

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")


def _ref(ideal):
    return ideal.shifted if isinstance(ideal, IdealPoint) else np.asarray(ideal, dtype=float)


def _nu(cfg):
    return cfg.nu if isinstance(cfg, StchConfig) else float(cfg)


def tch(f, lam, ideal) -> np.ndarray:
    """``max_i lam_i (f_i - z_i)`` over the last axis (``z`` already shifted by epsilon)."""
    return np.max(np.asarray(lam) * (np.asarray(f, dtype=float) - _ref(ideal)), axis=-1)


def stch(f, lam, ideal, cfg=StchConfig()) -> np.ndarray:
    """Smooth Tchebycheff ``nu * log sum exp(lam_i (f_i - z_i) / nu)``, overflow-safe."""
    nu = _nu(cfg)
    y = np.asarray(lam) * (np.asarray(f, dtype=float) - _ref(ideal))
    ymax = np.max(y, axis=-1, keepdims=True)
    return ymax[..., 0] + nu * np.log(np.sum(np.exp((y - ymax) / nu), axis=-1))


def stch_grad_f(f, lam, ideal, cfg=StchConfig()) -> np.ndarray:
    """``dl/df_i = lam_i * softmax(y / nu)_i``."""
    nu = _nu(cfg)
    lam = np.asarray(lam, dtype=float)
    y = lam * (np.asarray(f, dtype=float) - _ref(ideal))
    e = np.exp((y - np.max(y, axis=-1, keepdims=True)) / nu)
    return lam * e / e.sum(axis=-1, keepdims=True)


def surrogate_stch(X, T, lam, ideal, cfg, model, beta=0.05):
    """STCH of the LCB prediction at ``z = [x, t]`` and its gradient w.r.t. ``x``.

    Accepts single vectors or row batches; returns ``(values, grad_x)``.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    T = np.asarray(T, dtype=float).reshape(X.shape[0], -1)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (X.shape[0], np.shape(lam)[-1]))
    fhat, dfhat = model.lcb(np.hstack([X, T]), beta, return_grad=True)  # (S, m), (S, m, n+p)
    values, grad_x = stch_value_and_grad(fhat, dfhat[:, :, : X.shape[1]], lam, ideal, cfg)
    if single:
        return float(values[0]), grad_x[0]
    return values, grad_x


def stch_value_and_grad(fhat, dfhat, lam, ideal, cfg):
    """STCH of predictions ``fhat`` (S, m) and its chain through ``dfhat`` (S, m, n)."""
    w = stch_grad_f(fhat, lam, ideal, cfg)
    return stch(fhat, lam, ideal, cfg), np.einsum("sm,smd->sd", w, dfhat)


def update_ideal(archive: EvaluationArchive, epsilon: float = 1e-3) -> IdealPoint:
    if len(archive) == 0:
        raise StateError("cannot estimate an ideal point from an empty archive")
    return IdealPoint(archive.Y.min(axis=0), epsilon)
