"""Parametric multi-objective test problems, wrappers and the problem registry.

A parametric problem maps a decision vector ``x`` and a task parameter ``t``
to ``m`` objectives that are all minimized.  Every call to :meth:`evaluate`
counts as one expensive evaluation; calls flagged ``audit=True`` are tallied
separately so that metric bookkeeping never eats into the optimization budget.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DimensionError, DomainError, check_box, check_in_box


class UnsupportedError(NotImplementedError):
    pass


class ProblemSpecError(ValueError):
    pass


class ParametricProblem:
    """Base class for problems ``f(x, t)`` with box-bounded ``x`` and ``t``.

    Subclasses implement :meth:`_evaluate` on a batch ``(X, T)`` and may
    override :meth:`pareto_front` when the front is known in closed form.
    """

    name = "parametric"

    def __init__(self, n_obj, x_bounds, t_bounds):
        self.x_lb, self.x_ub = check_box(*x_bounds)
        if t_bounds is None or len(np.atleast_1d(t_bounds[0])) == 0:
            self.t_lb = self.t_ub = np.zeros(0)
        else:
            self.t_lb, self.t_ub = check_box(*t_bounds)
        self.m = int(n_obj)
        self.n_evals = 0
        self.n_audit_evals = 0
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.x_lb.size

    @property
    def p(self) -> int:
        return self.t_lb.size

    def _evaluate(self, X: np.ndarray, T: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_inputs(self, x, t):
        x = check_in_box(np.ravel(x), self.x_lb, self.x_ub, "decision vector")
        t = np.ravel(np.asarray(t, dtype=float))
        if self.p:
            t = check_in_box(t, self.t_lb, self.t_ub, "task parameter")
        elif t.size:
            raise DimensionError("problem takes no task parameter")
        return x, t

    def _count(self, audit):
        with self._lock:
            if audit:
                self.n_audit_evals += 1
            else:
                self.n_evals += 1

    def evaluate(self, x, t, audit: bool = False) -> np.ndarray:
        """Objective vector at a single ``(x, t)``; counts one evaluation."""
        x, t = self._check_inputs(x, t)
        y = np.asarray(self._evaluate(x[None, :], t[None, :]), dtype=float)[0]
        self._count(audit)
        return y

    def evaluate_batch(self, X, T, audit: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        T = np.asarray(T, dtype=float).reshape(X.shape[0], -1)
        return np.array([self.evaluate(x, t, audit=audit) for x, t in zip(X, T)])

    def pareto_front(self, t, k: int) -> np.ndarray:
        raise UnsupportedError(f"{self.name} has no analytic Pareto front")

    def pareto_set(self, t, k: int) -> np.ndarray:
        raise UnsupportedError(f"{self.name} has no analytic Pareto set")

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, p={self.p}, m={self.m})"


def _front_grid(k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    return np.linspace(0.0, 1.0, k) if k > 1 else np.array([0.5])


class ParamBiconvex(ParametricProblem):
    """Two objectives whose Pareto set sits at ``x2 = t``.

    ``g = 1 + t + (x2 - t)**2``, ``f1 = x1``, ``f2 = g * (1 - sqrt(x1 / g))``.
    The front at ``t`` is ``f2 = (1 + t) - sqrt(f1 * (1 + t))`` for ``f1`` in [0, 1].
    """

    name = "synth-P1"

    def __init__(self):
        super().__init__(2, ([0.0, 0.0], [1.0, 1.0]), ([0.0], [1.0]))

    def _evaluate(self, X, T):
        t = T[:, 0]
        g = 1.0 + t + (X[:, 1] - t) ** 2
        f1 = X[:, 0]
        f2 = g * (1.0 - np.sqrt(f1 / g))
        return np.column_stack([f1, f2])

    def pareto_front(self, t, k):
        s = 1.0 + float(np.ravel(t)[0])
        f1 = _front_grid(k)
        return np.column_stack([f1, s - np.sqrt(f1 * s)])

    def pareto_set(self, t, k):
        t0 = float(np.ravel(t)[0])
        return np.column_stack([_front_grid(k), np.full(k, t0)])


def simplex_lattice(m: int, k: int) -> np.ndarray:
    """``k`` structured points on the simplex, subsampled evenly from a lattice."""
    if k == 1:
        return np.full((1, m), 1.0 / m)
    h = 1
    while math.comb(h + m - 1, m - 1) < k:
        h += 1
    pts = []

    def rec(prefix, left, depth):
        if depth == m - 1:
            pts.append(prefix + [left])
            return
        for i in range(left + 1):
            rec(prefix + [i], left - i, depth + 1)

    rec([], h, 0)
    lattice = np.array(pts, dtype=float) / h
    idx = np.unique(np.round(np.linspace(0, len(lattice) - 1, k)).astype(int))
    return lattice[idx]


class ParamTriobjective(ParametricProblem):
    """Spherical three-objective front whose radius grows with ``t``.

    With ``g = (x3 - t)**2`` and ``r = (1 + t) * (1 + g)``::

        f1 = r * cos(pi/2 x1) * cos(pi/2 x2)
        f2 = r * cos(pi/2 x1) * sin(pi/2 x2)
        f3 = r * sin(pi/2 x1)

    The Pareto set is ``x3 = t`` and the front is the positive octant of the
    sphere of radius ``1 + t``.
    """

    name = "synth-P2"

    def __init__(self):
        super().__init__(3, (np.zeros(3), np.ones(3)), ([0.0], [1.0]))

    def _evaluate(self, X, T):
        t = T[:, 0]
        r = (1.0 + t) * (1.0 + (X[:, 2] - t) ** 2)
        a = 0.5 * np.pi * X[:, 0]
        b = 0.5 * np.pi * X[:, 1]
        return np.column_stack([r * np.cos(a) * np.cos(b), r * np.cos(a) * np.sin(b), r * np.sin(a)])

    def pareto_front(self, t, k):
        s = 1.0 + float(np.ravel(t)[0])
        d = simplex_lattice(3, k)
        return s * d / np.linalg.norm(d, axis=1, keepdims=True)


class DynShift(ParametricProblem):
    """Time-shifting Pareto set: ``x_i = sin(pi t / 2)`` for ``i >= 2``; front ``f2 = 1 - sqrt(f1)``."""

    name = "synth-D1"

    def __init__(self, n_var: int = 10):
        if n_var < 2:
            raise ProblemSpecError("synth-D1 needs at least two variables")
        super().__init__(2, (np.zeros(n_var), np.ones(n_var)), ([0.0], [1.0]))

    @staticmethod
    def shift(t):
        return np.sin(0.5 * np.pi * np.asarray(t, dtype=float))

    def _evaluate(self, X, T):
        G = self.shift(T[:, 0])
        g = 1.0 + np.sum((X[:, 1:] - G[:, None]) ** 2, axis=1)
        f1 = X[:, 0]
        return np.column_stack([f1, g * (1.0 - np.sqrt(f1 / g))])

    def pareto_front(self, t, k):
        f1 = _front_grid(k)
        return np.column_stack([f1, 1.0 - np.sqrt(f1)])

    def pareto_set(self, t, k):
        G = float(self.shift(np.ravel(t)[0]))
        X = np.full((k, self.n), G)
        X[:, 0] = _front_grid(k)
        return X


class CallbackProblem(ParametricProblem):
    """Plugin problem backed by a user callback ``fn(x, t) -> objectives``."""

    def __init__(self, n_obj, x_bounds, t_bounds, fn: Callable, name: str = "plugin"):
        super().__init__(n_obj, x_bounds, t_bounds)
        self.fn = fn
        self.name = name

    def _evaluate(self, X, T):
        out = np.array([np.ravel(self.fn(x, t)) for x, t in zip(X, T)], dtype=float)
        if out.shape[1] != self.m:
            raise DimensionError(f"callback returned {out.shape[1]} objectives, expected {self.m}")
        return out


@dataclass(frozen=True)
class SharedComponentSpec:
    base: ParametricProblem
    shared: tuple

    def __post_init__(self):
        n_total = self.base.n
        s = tuple(int(i) for i in self.shared)
        object.__setattr__(self, "shared", s)
        if any(i < 0 or i >= n_total for i in s):
            raise ProblemSpecError(f"shared index out of range for {n_total} variables: {s}")
        if len(set(s)) != len(s):
            raise ProblemSpecError("duplicate shared index")
        if not s or len(s) == n_total:
            raise ProblemSpecError("need at least one shared and one free variable")
        if self.base.p:
            raise ProblemSpecError("base problem must not take its own task parameter")

    @property
    def free(self) -> tuple:
        return tuple(i for i in range(self.base.n) if i not in self.shared)


class SharedComponentProblem(ParametricProblem):
    """Base problem with the shared variables promoted to the task parameter."""

    def __init__(self, spec: SharedComponentSpec):
        self.spec = spec
        base = spec.base
        s = list(spec.shared)
        f = list(spec.free)
        super().__init__(base.m, (base.x_lb[f], base.x_ub[f]), (base.x_lb[s], base.x_ub[s]))
        self.name = f"shared({base.name})"

    def merge(self, x, t) -> np.ndarray:
        full = np.empty(self.spec.base.n)
        full[list(self.spec.free)] = np.ravel(x)
        full[list(self.spec.shared)] = np.ravel(t)
        return full

    def evaluate(self, x, t, audit: bool = False) -> np.ndarray:
        x, t = self._check_inputs(x, t)
        y = self.spec.base.evaluate(self.merge(x, t), [], audit=audit)
        self._count(audit)
        return y

    def _evaluate(self, X, T):
        return np.array([self.spec.base._evaluate(self.merge(x, t)[None, :], np.zeros((1, 0)))[0]
                         for x, t in zip(X, T)])


def wrap_shared(spec: SharedComponentSpec) -> SharedComponentProblem:
    return SharedComponentProblem(spec)


@dataclass(frozen=True)
class DynamicSpec:
    n_t: int = 10
    tau_t: int = 2
    T_max: int = 40

    def __post_init__(self):
        if self.n_t < 1 or self.tau_t < 1 or self.T_max < self.tau_t:
            raise ProblemSpecError(f"invalid dynamic spec {self}")


def time_index(spec: DynamicSpec, tau: int) -> float:
    """Environment time ``floor(tau / tau_t) / n_t``."""
    if tau < 0 or tau > spec.T_max:
        raise DomainError(f"generation {tau} outside [0, {spec.T_max}]")
    return (tau // spec.tau_t) / spec.n_t


def analytic_front(problem: ParametricProblem, t, k: int) -> np.ndarray:
    return problem.pareto_front(t, k)


PROBLEMS: dict[str, Callable[..., ParametricProblem]] = {
    "synth-P1": ParamBiconvex,
    "synth-P2": ParamTriobjective,
    "synth-D1": DynShift,
}


def register_problem(name: str, factory: Callable[..., ParametricProblem]):
    PROBLEMS[name] = factory
    return factory


def make_problem(name: str, **kwargs) -> ParametricProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ProblemSpecError(f"unknown problem {name!r}; registered: {sorted(PROBLEMS)}") from None
    return factory(**kwargs)


def register_callback(name: str, n_obj: int, x_bounds: Sequence, t_bounds: Sequence,
                      fn: Callable, front: Optional[Callable] = None):
    """Register a plugin problem from plain bounds and an evaluate callback."""

    def factory():
        prob = CallbackProblem(n_obj, x_bounds, t_bounds, fn, name=name)
        if front is not None:
            prob.pareto_front = lambda t, k: np.asarray(front(t, k), dtype=float)
        return prob

    return register_problem(name, factory)
