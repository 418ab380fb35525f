"""Online optimization of dynamic problems with the parametric Pareto-set model.

The task parameter becomes the environment time.  Training uses a degenerate
task distribution at the current time, the GP sees a first-in-first-out
window of past evaluations, and acquisition measures improvement only against
solutions found in the current environment.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import acquisition_reference, build_pool, hypervolume, select_batch
from .core import EvaluationArchive, RandomSource, nondominated_filter, space_filling_init
from .metrics import igd, migd, mhv
from .problems import DynamicSpec, ParametricProblem, UnsupportedError, time_index
from .psmodel import ParetoSetModel
from .runner import (PPSLMOBO, SEED_GP, SEED_INIT, SEED_MODEL, SEED_POOL, SEED_TRAIN,
                     ConfigError, default_n_init, infer_front)
from .surrogate import GaussianSurrogate, augmented_bounds, fit_surrogate
from .trainer import FixedTasks, train_phase

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_history", "random")


def degenerate_task_dist(t_now) -> FixedTasks:
    return FixedTasks(t_now)


def ablation_mode(flag: str) -> str:
    if flag not in ABLATIONS:
        raise ConfigError(f"unknown ablation {flag!r}; expected one of {ABLATIONS}")
    return flag


def online_time(tau: int, T_max: int) -> float:
    """Model-side time ``tau / T_max``."""
    return tau / T_max


@dataclass
class GenerationRecord:
    generation: int
    t: float
    igd: float
    hv: float
    archive_size: int
    train_size: int
    n_evals: int
    loss_last: float = float("nan")
    seconds: float = 0.0
    batch: list = field(default_factory=list, repr=False)
    front: np.ndarray = field(default=None, repr=False)


@dataclass
class DynamicRunState:
    generation: int
    t: float
    archive: EvaluationArchive
    log: list = field(default_factory=list)


class DynamicPPSLMOBO(PPSLMOBO):
    """Generation-by-generation variant for dynamic problems.

    Each generation evaluates ``batch_size`` new points in the current
    environment; the environment time follows ``floor(tau / tau_t) / n_t``.
    """

    def __init__(self, n_t=20, tau_t=2, T_max=40, window=200, ablation="full",
                 n_init=None, batch_size=5, pool_size=1000,
                 n_tasks=20, n_prefs=10, n_steps=100, eta_b=1e-3, eta_hn=1e-5,
                 nu=0.01, beta=0.05, epsilon=1e-3, optimizer="sgd", ideal_update="archive",
                 hidden=None, rank=3, hyper_hidden=(1024, 1024, 1024, 1024),
                 kernel="se", gp_restarts=3, gp_steps=200, front_size=100,
                 reference_size=500, random_state=0, verbose=False):
        self.n_t = n_t
        self.tau_t = tau_t
        self.T_max = T_max
        self.window = window
        self.ablation = ablation
        self.n_init = n_init
        self.batch_size = batch_size
        self.pool_size = pool_size
        self.n_tasks = n_tasks
        self.n_prefs = n_prefs
        self.n_steps = n_steps
        self.eta_b = eta_b
        self.eta_hn = eta_hn
        self.nu = nu
        self.beta = beta
        self.epsilon = epsilon
        self.optimizer = optimizer
        self.ideal_update = ideal_update
        self.hidden = hidden
        self.rank = rank
        self.hyper_hidden = hyper_hidden
        self.kernel = kernel
        self.gp_restarts = gp_restarts
        self.gp_steps = gp_steps
        self.front_size = front_size
        self.reference_size = reference_size
        self.random_state = random_state
        self.verbose = verbose

    @property
    def spec_(self) -> DynamicSpec:
        return DynamicSpec(self.n_t, self.tau_t, self.T_max)

    def total_evaluations(self, problem) -> int:
        n0 = default_n_init(problem) if self.n_init is None else int(self.n_init)
        return n0 + self.T_max * self.batch_size

    # ---------------------------------------------------------------- setup

    def start(self, problem: ParametricProblem):
        ablation_mode(self.ablation)
        if problem.p != 1:
            raise ConfigError("dynamic mode needs a scalar time parameter")
        if self.batch_size < 1 or self.pool_size < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= pool_size")
        spec = self.spec_
        n0 = default_n_init(problem) if self.n_init is None else int(self.n_init)
        rs = RandomSource(self.random_state)
        self._rng_init = rs.child(SEED_INIT).generator
        self._rng_train = rs.child(SEED_TRAIN).generator
        self._rng_pool = rs.child(SEED_POOL).generator
        self._cfg = self.train_config()

        t0 = time_index(spec, 0)
        archive = EvaluationArchive(capacity=self.window)
        X0, T0 = space_filling_init(self._rng_init, n0, (problem.x_lb, problem.x_ub), ([t0], [t0]))
        Y0 = problem.evaluate_batch(X0, T0)
        archive.extend(X0, T0, Y0, generation=-1, t_env=t0)
        self.evaluations_ = EvaluationArchive()  # full log; the window above forgets
        self.evaluations_.extend(X0, T0, Y0, generation=-1, t_env=t0)
        self.model_ = ParetoSetModel.init(self.model_config(problem), rs.child(SEED_MODEL))
        self.surrogate_ = GaussianSurrogate(kernel=self.kernel, bounds=augmented_bounds(problem),
                                            n_restarts=self.gp_restarts, n_steps=self.gp_steps,
                                            random_state=rs.child(SEED_GP).generator)
        self.problem_ = problem
        self.archive_ = archive
        self.state_ = DynamicRunState(0, t0, archive)
        self.history_ = self.state_.log
        return self.state_

    # ----------------------------------------------------------- generation

    def _training_archive(self, gen):
        if self.ablation == "no_history" and gen > 0:
            return self.archive_.select(lambda info: info["generation"] == gen - 1)
        return self.archive_

    def step_generation(self) -> DynamicRunState:
        state = self.state_
        problem = self.problem_
        if state.generation >= self.T_max:
            raise StopIteration("dynamic run complete")
        tic = time.perf_counter()
        gen = state.generation
        t = time_index(self.spec_, gen)
        state.t = t
        tasks = degenerate_task_dist(t)
        current = self.archive_.select(lambda info: info["t_env"] == t)
        loss = float("nan")
        train_size = 0

        if self.ablation == "random":
            X = self._rng_pool.uniform(problem.x_lb, problem.x_ub, (self.batch_size, problem.n))
        else:
            train = self._training_archive(gen)
            train_size = len(train)
            self.assert_causal(train, gen, t)
            fit_surrogate(train, problem, self.surrogate_)
            losses = train_phase(self.model_, self.surrogate_, train, self._cfg, self._rng_train,
                                 tasks, None)
            loss = losses[-1] if losses else loss
            pool = build_pool(self.model_, self.surrogate_, tasks, self.pool_size, self.beta,
                              self._rng_pool, self.batch_size)
            front = current.Y if len(current) else np.empty((0, problem.m))
            ref = acquisition_reference(front, pool.Y)
            idx, _ = select_batch(pool, front, self.batch_size, ref)
            X = pool.X[idx]
        T = np.full((len(X), 1), t)
        Y = problem.evaluate_batch(X, T)
        self.archive_.extend(X, T, Y, generation=gen, t_env=t)
        self.evaluations_.extend(X, T, Y, generation=gen, t_env=t)

        rec = GenerationRecord(gen, t, float("nan"), float("nan"), len(self.archive_), train_size,
                               problem.n_evals, loss, batch=[(x, y) for x, y in zip(X, Y)])
        self._record_metrics(rec)
        rec.seconds = time.perf_counter() - tic
        state.log.append(rec)
        state.generation = gen + 1
        if self.verbose:
            log.info("gen %d t=%.3f igd=%.4g archive=%d (%.1fs)", gen, t, rec.igd, rec.archive_size, rec.seconds)
        return state

    def approximation_front(self, t) -> np.ndarray:
        """Output population at environment ``t``: evaluated points in this
        environment, plus the model's inferred front (audit evaluations)."""
        problem = self.problem_
        cur = self.archive_.select(lambda info: info["t_env"] == t)
        parts = [cur.Y] if len(cur) else []
        if self.ablation != "random":
            _, X = infer_front(self.model_, [t], self.front_size, check_box=False)
            parts.append(problem.evaluate_batch(X, np.full((len(X), 1), t), audit=True))
        return nondominated_filter(np.vstack(parts))

    def _record_metrics(self, rec):
        front = self.approximation_front(rec.t)
        rec.front = front
        try:
            true = self.problem_.pareto_front([rec.t], self.reference_size)
        except UnsupportedError:
            return
        rec.igd = igd(true, front)
        rec.hv = hypervolume(front, true.max(axis=0))

    @staticmethod
    def assert_causal(train, gen, t):
        for info, tt in zip(train.info, train.T):
            if info["generation"] > gen or tt[0] > t:
                raise AssertionError(f"training record from generation {info['generation']} at t={tt[0]} "
                                     f"visible at generation {gen} (t={t})")

    def fit(self, problem: ParametricProblem, y=None):
        self.start(problem)
        while self.state_.generation < self.T_max:
            self.step_generation()
        return self

    @property
    def migd_(self) -> float:
        return migd([r.igd for r in self.history_])

    @property
    def mhv_(self) -> float:
        fronts = [r.front for r in self.history_]
        refs = [self.problem_.pareto_front([r.t], self.reference_size).max(axis=0) for r in self.history_]
        return mhv(fronts, refs)
