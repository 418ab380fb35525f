"""Shared value types, sampling primitives and input validation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc
from sklearn.exceptions import NotFittedError

SIMPLEX_TOL = 1e-9


class DimensionError(ValueError):
    pass


class BoundError(ValueError):
    pass


class DomainError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class NotFittedStateError(StateError, NotFittedError):
    """Raised by estimators used before ``fit``."""


class RandomSource:
    """Seeded random stream. Single owner; derive children for other consumers."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.generator = np.random.default_rng(self.seed)

    def child(self, key: int) -> "RandomSource":
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, int(key)])
        return RandomSource(int(ss.generate_state(1, dtype=np.uint64)[0]))

    def __repr__(self):
        return f"RandomSource(seed={self.seed})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomSource):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# validation helpers

def check_box(lb, ub) -> tuple[np.ndarray, np.ndarray]:
    lb = np.atleast_1d(np.asarray(lb, dtype=float))
    ub = np.atleast_1d(np.asarray(ub, dtype=float))
    if lb.shape != ub.shape or lb.ndim != 1 or lb.size == 0:
        raise BoundError(f"malformed box with shapes {lb.shape} and {ub.shape}")
    if np.any(lb > ub):
        raise BoundError(f"lower bound exceeds upper bound: {lb} > {ub}")
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise BoundError("box bounds must be finite")
    return lb, ub


def check_preference(weights, m: Optional[int] = None) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if m is not None and w.shape[-1] != m:
        raise DimensionError(f"expected {m} preference weights, got {w.shape[-1]}")
    if np.any(w < 0):
        raise DomainError("preference weights must be nonnegative")
    if np.any(np.abs(w.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise DomainError("preference weights must sum to 1")
    return w


def check_in_box(values, lb, ub, name="vector") -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != lb.shape[0]:
        raise DimensionError(f"{name} has length {v.shape[-1]}, expected {lb.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} contains non-finite values")
    if np.any(v < lb) or np.any(v > ub):
        raise DomainError(f"{name} outside its box [{lb}, {ub}]: {v}")
    return v


def check_objectives(values, m: Optional[int] = None) -> np.ndarray:
    y = np.asarray(values, dtype=float)
    if m is not None and y.shape[-1] != m:
        raise DimensionError(f"expected {m} objectives, got {y.shape[-1]}")
    if not np.all(np.isfinite(y)):
        raise DomainError("objective values must be finite")
    return y


# ---------------------------------------------------------------------------
# sampling

def sample_simplex(rng, m: int, size: Optional[int] = None) -> np.ndarray:
    """Uniform draw(s) from the (m-1)-simplex via normalized exponentials."""
    if m < 2:
        raise DimensionError(f"simplex sampling needs m >= 2, got {m}")
    gen = as_generator(rng)
    shape = (m,) if size is None else (size, m)
    e = gen.standard_exponential(shape)
    return e / e.sum(axis=-1, keepdims=True)


def sample_task(rng, lb, ub, size: Optional[int] = None) -> np.ndarray:
    lb, ub = check_box(lb, ub)
    gen = as_generator(rng)
    shape = lb.shape if size is None else (size,) + lb.shape
    u = gen.random(shape)
    # zero-width boxes must return the bound exactly
    return np.where(ub > lb, lb + u * (ub - lb), lb)


def space_filling_init(rng, n_points: int, x_bounds, t_bounds):
    """Latin-hypercube design over the joint decision/parameter box.

    Returns ``(X, T)`` with shapes ``(n_points, n)`` and ``(n_points, p)``.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    xlb, xub = check_box(*x_bounds)
    tlb, tub = check_box(*t_bounds)
    lb = np.concatenate([xlb, tlb])
    ub = np.concatenate([xub, tub])
    unit = qmc.LatinHypercube(d=lb.size, rng=as_generator(rng)).random(n_points)
    pts = lb + unit * (ub - lb)
    n = xlb.size
    return pts[:, :n], pts[:, n:]


# ---------------------------------------------------------------------------
# dominance

def dominates(a, b) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_mask(points) -> np.ndarray:
    Y = np.asarray(points, dtype=float)
    if Y.size == 0:
        return np.zeros(0, dtype=bool)
    if Y.shape[1] == 2:
        return _nondominated_mask_2d(Y)
    # a dominator has a strictly smaller coordinate sum, and by transitivity it
    # is enough to test each point against the survivors seen so far
    order = np.argsort(Y.sum(axis=1), kind="stable")
    keep = np.zeros(len(Y), dtype=bool)
    front = np.empty_like(Y)
    k = 0
    for i in order:
        y = Y[i]
        F = front[:k]
        if not np.any(np.all(F <= y, axis=1) & np.any(F < y, axis=1)):
            keep[i] = True
            front[k] = y
            k += 1
    return keep


def _nondominated_mask_2d(Y):
    # after a lexicographic sort, y is dominated iff some earlier point that is
    # not identical to it has f2 <= y's f2
    o = np.lexsort((Y[:, 1], Y[:, 0]))
    S = Y[o]
    new_run = np.r_[True, np.any(S[1:] != S[:-1], axis=1)]
    run_start = np.maximum.accumulate(np.where(new_run, np.arange(len(S)), 0))
    prior_min = np.r_[np.inf, np.minimum.accumulate(S[:, 1])][run_start]
    keep = np.empty(len(Y), dtype=bool)
    keep[o] = ~(prior_min <= S[:, 1])
    return keep


def nondominated_filter(points) -> np.ndarray:
    """Points not dominated by any other input point, in input order."""
    Y = np.asarray(points, dtype=float)
    if Y.size == 0:
        return Y.reshape(0, Y.shape[-1] if Y.ndim == 2 else 0)
    return Y[nondominated_mask(Y)]


# ---------------------------------------------------------------------------
# archive

@dataclass
class EvaluationArchive:
    """Ordered (x, t, y) records; with ``capacity`` set, oldest are dropped first."""

    capacity: Optional[int] = None
    _records: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("capacity must be positive")
        self._records = deque(self._records, maxlen=self.capacity)

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def push(self, x, t, y, **info):
        x = np.array(x, dtype=float).ravel()
        t = np.array(t, dtype=float).ravel()
        y = check_objectives(np.array(y, dtype=float).ravel())
        if self._records:
            x0, t0, y0, _ = self._records[0]
            if (x.size, t.size, y.size) != (x0.size, t0.size, y0.size):
                raise DimensionError("record dimensions inconsistent with archive")
        self._records.append((x, t, y, dict(info)))

    def extend(self, X, T, Y, **info):
        for x, t, y in zip(X, T, Y):
            self.push(x, t, y, **info)

    @property
    def X(self) -> np.ndarray:
        return np.array([r[0] for r in self._records])

    @property
    def T(self) -> np.ndarray:
        return np.array([r[1] for r in self._records])

    @property
    def Y(self) -> np.ndarray:
        return np.array([r[2] for r in self._records])

    @property
    def info(self) -> list[dict]:
        return [r[3] for r in self._records]

    def select(self, predicate) -> "EvaluationArchive":
        out = EvaluationArchive()
        for x, t, y, info in self._records:
            if predicate(info):
                out.push(x, t, y, **info)
        return out

