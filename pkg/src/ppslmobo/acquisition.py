"""Hypervolume, hypervolume improvement and greedy batch acquisition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import nondominated_filter, sample_simplex


class UnsupportedDimensionError(NotImplementedError):
    pass


def _hv2d(P, ref):
    # P: nondominated, strictly inside ref
    P = P[np.argsort(P[:, 0], kind="stable")]
    x_next = np.append(P[1:, 0], ref[0])
    return float(np.sum((x_next - P[:, 0]) * (ref[1] - P[:, 1])))


def _hv2d_any(P, ref):
    if len(P) == 0:
        return 0.0
    return _hv2d(nondominated_filter(P), ref)


def _hv3d(P, ref):
    P = P[np.argsort(P[:, 2], kind="stable")]
    z_next = np.append(P[1:, 2], ref[2])
    total = 0.0
    for i in range(len(P)):
        depth = z_next[i] - P[i, 2]
        if depth > 0:
            total += _hv2d_any(P[: i + 1, :2], ref[:2]) * depth
    return total


def hypervolume(points, ref) -> float:
    """Exact dominated hypervolume (minimization) for 2 or 3 objectives.

    Points that do not strictly dominate ``ref`` contribute nothing.
    """
    ref = np.asarray(ref, dtype=float)
    m = ref.size
    if m > 3:
        raise UnsupportedDimensionError(f"exact hypervolume supports m <= 3, got {m}")
    P = np.asarray(points, dtype=float).reshape(-1, m)
    P = P[np.all(P < ref, axis=1)]
    if len(P) == 0:
        return 0.0
    if m == 1:
        return float(ref[0] - P[:, 0].min())
    P = nondominated_filter(P)
    if m == 2:
        return _hv2d(P, ref)
    return _hv3d(P, ref)


def _weakly_dominated(new, front):
    if len(front) == 0:
        return np.zeros(len(new), dtype=bool)
    return np.any(np.all(front[None, :, :] <= new[:, None, :], axis=2), axis=1)


def hvi(new_points, front, ref) -> float:
    """``HV(front + new) - HV(front)``; exactly zero when nothing new escapes the front."""
    ref = np.asarray(ref, dtype=float)
    new = np.asarray(new_points, dtype=float).reshape(-1, ref.size)
    front = np.asarray(front, dtype=float).reshape(-1, ref.size)
    new = new[np.all(new < ref, axis=1)]
    if len(new) == 0 or np.all(_weakly_dominated(new, front)):
        return 0.0
    base = hypervolume(front, ref)
    return max(hypervolume(np.vstack([front, new]), ref) - base, 0.0)


@dataclass
class CandidatePool:
    X: np.ndarray
    T: np.ndarray
    lam: np.ndarray
    Y: np.ndarray  # LCB predictions

    def __len__(self):
        return self.X.shape[0]


def build_pool(model, surrogate, task_dist, size, beta, rng, batch_size=1) -> CandidatePool:
    """Sample ``size`` (task, preference) pairs and map them through the model."""
    if size < batch_size:
        raise ValueError(f"pool size {size} smaller than batch size {batch_size}")
    T = task_dist.sample(rng, size)
    lam = sample_simplex(rng, model.config.n_obj, size)
    X = model.forward(lam, T)
    Y = surrogate.lcb(np.hstack([X, T]), beta)
    return CandidatePool(X, T, lam, Y)


def acquisition_reference(*objective_sets, margin=0.1) -> np.ndarray:
    """Componentwise max over all given points plus ``margin`` times the span."""
    Y = np.vstack([np.atleast_2d(s) for s in objective_sets if np.size(s)])
    hi = Y.max(axis=0)
    span = hi - Y.min(axis=0)
    span = np.where(span > 0, span, np.maximum(np.abs(hi), 1.0))
    return hi + margin * span


def select_batch(pool: CandidatePool, front, batch_size, ref):
    """Sequential greedy HVI selection over the pool's predicted objectives.

    ``front`` is an objective array or an archive (its ``Y`` is used).
    Returns ``(indices, gains)``; ties go to the lowest pool index.
    """
    front = getattr(front, "Y", front)
    if batch_size <= 0:
        return [], []
    if batch_size > len(pool):
        raise ValueError("batch size exceeds pool size")
    ref = np.asarray(ref, dtype=float)
    Y = pool.Y
    current = np.asarray(front, dtype=float).reshape(-1, ref.size)
    current = nondominated_filter(current[np.all(current < ref, axis=1)]) if len(current) else current
    chosen, gains = [], []
    available = np.ones(len(pool), dtype=bool)
    for _ in range(batch_size):
        base = hypervolume(current, ref)
        live = available & np.all(Y < ref, axis=1) & ~_weakly_dominated(Y, current)
        scores = np.zeros(len(pool))
        for i in np.flatnonzero(live):
            scores[i] = max(hypervolume(np.vstack([current, Y[i]]), ref) - base, 0.0)
        scores[~available] = -np.inf
        best = int(np.argmax(scores))
        chosen.append(best)
        gains.append(float(scores[best]))
        available[best] = False
        current = nondominated_filter(np.vstack([current, Y[best]])) if np.all(Y[best] < ref) else current
    return chosen, gains
