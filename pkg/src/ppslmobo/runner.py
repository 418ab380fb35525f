"""End-to-end optimization loop for static parametric problems."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .acquisition import acquisition_reference, build_pool, select_batch
from .core import DomainError, EvaluationArchive, NotFittedStateError, RandomSource, space_filling_init
from .metrics import NormalizationSpec, normalized_hv
from .problems import ParametricProblem, UnsupportedError, simplex_lattice
from .psmodel import ParetoSetModel, PsModelConfig
from .surrogate import GaussianSurrogate, augmented_bounds, fit_surrogate
from .trainer import TrainConfig, UniformTasks, make_optimizer, train_phase

log = logging.getLogger(__name__)

# child-stream keys of the run's RandomSource
SEED_INIT, SEED_MODEL, SEED_GP, SEED_TRAIN, SEED_POOL, SEED_HELDOUT = range(1, 7)


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending field when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def default_n_init(problem: ParametricProblem) -> int:
    return max(20, 2 * (problem.n + problem.p))


def preference_grid(m: int, k: int) -> np.ndarray:
    """Evenly spread preferences: a uniform line for two objectives, a lattice otherwise."""
    if m == 2:
        w = np.linspace(0.0, 1.0, k) if k > 1 else np.array([0.5])
        return np.column_stack([w, 1.0 - w])
    return simplex_lattice(m, k)


def infer_front(model: ParetoSetModel, t, k: int, check_box: bool = True):
    """Decision vectors for ``k`` spread preferences at task ``t``; no evaluations."""
    t = np.ravel(np.asarray(t, dtype=float))
    if check_box:
        bounds = model.config.t_bounds
        if bounds is not None and (np.any(t < bounds[0]) or np.any(t > bounds[1])):
            raise DomainError(f"task parameter {t} outside the trained box {bounds}")
    lam = preference_grid(model.config.n_obj, k)
    return lam, model.infer(lam, t)


@dataclass
class IterationRecord:
    iteration: int
    n_evals: int
    loss_first: float = float("nan")
    loss_last: float = float("nan")
    loss_mean: float = float("nan")
    acq_gain: float = float("nan")
    archive_size: int = 0
    seconds: float = 0.0


@dataclass
class MetricRecord:
    iteration: int
    t_index: int
    t: np.ndarray
    norm_hv: float
    optimum_hv: float
    front: Optional[np.ndarray] = field(default=None, repr=False)


def heldout_metrics(model, problem, t_values, iteration, k=100, reference_k=10_000):
    """Normalized HV of inferred fronts at held-out tasks, using audit evaluations."""
    out = []
    for j, t in enumerate(t_values):
        lam, X = infer_front(model, t, k, check_box=False)
        Y = problem.evaluate_batch(X, np.tile(t, (len(X), 1)), audit=True)
        ref_front = problem.pareto_front(t, reference_k)
        spec = NormalizationSpec.from_front(ref_front)
        out.append(MetricRecord(iteration, j, np.asarray(t), normalized_hv(Y, spec),
                                normalized_hv(ref_front, spec), np.hstack([lam, X, Y])))
    return out


class PPSLMOBO(BaseEstimator):
    """Parametric Pareto-set learning driven by GP surrogates and HVI batches.

    ``fit(problem)`` spends ``budget`` expensive evaluations: a Latin-hypercube
    initial design of ``n_init`` points, then batches of ``batch_size`` chosen
    by greedy hypervolume improvement.  The fitted model maps a preference
    vector and a task parameter to a decision vector (``predict``).
    """

    def __init__(self, budget=200, n_init=None, batch_size=5, pool_size=1000,
                 n_tasks=20, n_prefs=10, n_steps=100, eta_b=1e-3, eta_hn=1e-5,
                 nu=0.01, beta=0.05, epsilon=1e-3, optimizer="sgd", ideal_update="archive",
                 hidden=None, rank=3, hyper_hidden=(1024, 1024, 1024, 1024),
                 kernel="se", gp_restarts=3, gp_steps=200, n_heldout=10,
                 front_size=100, eval_every=0, random_state=0, verbose=False):
        self.budget = budget
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
        self.n_heldout = n_heldout
        self.front_size = front_size
        self.eval_every = eval_every
        self.random_state = random_state
        self.verbose = verbose

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.n_tasks, self.n_prefs, self.n_steps, self.eta_b, self.eta_hn,
                           self.nu, self.beta, self.epsilon, self.optimizer, self.ideal_update)

    def model_config(self, problem) -> PsModelConfig:
        return PsModelConfig(problem.m, problem.n, problem.p, (problem.x_lb, problem.x_ub),
                             hidden=self.hidden, rank=self.rank, hyper_hidden=tuple(self.hyper_hidden),
                             t_bounds=(problem.t_lb, problem.t_ub))

    def _n_iterations(self, n0):
        if n0 < 2:
            raise ConfigError("initial design needs at least two points")
        if n0 > self.budget:
            raise ConfigError(f"initial design ({n0}) exceeds budget ({self.budget})")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.pool_size < self.batch_size:
            raise ConfigError("pool size must be at least the batch size")
        return (self.budget - n0) // self.batch_size

    def fit(self, problem: ParametricProblem, y=None):
        if problem.p < 1:
            raise ConfigError("problem has no task parameter")
        n0 = default_n_init(problem) if self.n_init is None else int(self.n_init)
        n_iter = self._n_iterations(n0)
        cfg = self.train_config()
        rs = RandomSource(self.random_state)
        rng_train = rs.child(SEED_TRAIN).generator
        rng_pool = rs.child(SEED_POOL).generator
        self.heldout_t_ = UniformTasks(problem.t_lb, problem.t_ub).sample(rs.child(SEED_HELDOUT), self.n_heldout)

        archive = EvaluationArchive()
        X0, T0 = space_filling_init(rs.child(SEED_INIT), n0, (problem.x_lb, problem.x_ub),
                                    (problem.t_lb, problem.t_ub))
        archive.extend(X0, T0, problem.evaluate_batch(X0, T0), iteration=0, counter=0)
        model = ParetoSetModel.init(self.model_config(problem), rs.child(SEED_MODEL))
        surrogate = GaussianSurrogate(kernel=self.kernel, bounds=augmented_bounds(problem),
                                      n_restarts=self.gp_restarts, n_steps=self.gp_steps,
                                      random_state=rs.child(SEED_GP).generator)
        optimizer = make_optimizer(model, cfg)
        tasks = UniformTasks(problem.t_lb, problem.t_ub)

        self.history_ = []
        self.metric_log_ = []
        self.archive_, self.model_, self.surrogate_, self.problem_ = archive, model, surrogate, problem
        for it in range(1, n_iter + 1):
            tic = time.perf_counter()
            fit_surrogate(archive, problem, surrogate)
            losses = train_phase(model, surrogate, archive, cfg, rng_train, tasks, optimizer)
            pool = build_pool(model, surrogate, tasks, self.pool_size, self.beta, rng_pool, self.batch_size)
            ref = acquisition_reference(archive.Y, pool.Y)
            idx, gains = select_batch(pool, archive.Y, self.batch_size, ref)
            Y = problem.evaluate_batch(pool.X[idx], pool.T[idx])
            archive.extend(pool.X[idx], pool.T[idx], Y, iteration=it, counter=it)
            rec = IterationRecord(it, problem.n_evals, archive_size=len(archive),
                                  seconds=time.perf_counter() - tic, acq_gain=float(np.sum(gains)))
            if losses:
                rec.loss_first, rec.loss_last, rec.loss_mean = losses[0], losses[-1], float(np.mean(losses))
            self.history_.append(rec)
            if self.verbose:
                log.info("iter %d/%d evals=%d loss=%.4g (%.1fs)", it, n_iter, problem.n_evals,
                         rec.loss_last, rec.seconds)
            if self.eval_every and it % self.eval_every == 0 and it != n_iter:
                self._record_metrics(it)
        self._record_metrics(n_iter)
        self.n_iter_ = n_iter
        return self

    def _record_metrics(self, iteration):
        try:
            self.metric_log_ += heldout_metrics(self.model_, self.problem_, self.heldout_t_, iteration,
                                                k=self.front_size)
        except UnsupportedError:
            pass

    def _check(self):
        if not hasattr(self, "model_"):
            raise NotFittedStateError("PPSLMOBO is not fitted")

    def predict(self, lam, t):
        """Decision vectors for preference rows ``lam`` at task ``t``."""
        self._check()
        return self.model_.forward(lam, t)

    def infer_front(self, t, k=100):
        self._check()
        return infer_front(self.model_, t, k)
