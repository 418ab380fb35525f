"""Gaussian-process surrogates over the augmented input ``z = [x, t]``.

One independent GP per objective.  Inputs are scaled to the unit cube with
the declared problem boxes and targets are standardized before fitting.
Hyperparameters (ARD lengthscales, signal variance, constant mean and,
optionally, the noise variance) are fit by Adam ascent on the log marginal
likelihood in log-parameter space with random restarts.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import EvaluationArchive, NotFittedStateError, as_generator

JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
STD_FLOOR = 1e-9
LOG_LS_BOUNDS = (math.log(1e-2), math.log(1e2))
LOG_SF_BOUNDS = (math.log(1e-3), math.log(1e2))
LOG_NOISE_BOUNDS = (math.log(1e-8), math.log(1.0))
SQRT5 = math.sqrt(5.0)


class FitError(RuntimeError):
    pass


class SizeError(ValueError):
    pass


def _sq_diffs(A, B):
    # (d, na, nb) squared coordinate differences
    return (A.T[:, :, None] - B.T[:, None, :]) ** 2


def kernel_and_factor(D, lengthscales, signal_variance, kind):
    """Kernel matrix from squared differences ``D`` plus the factor ``phi``
    with ``dk/du_i = -phi * (u_i - u'_i) / l_i**2``."""
    r2 = np.tensordot(1.0 / lengthscales ** 2, D, axes=1)
    if kind == "se":
        K = signal_variance * np.exp(-0.5 * r2)
        return K, K
    if kind == "matern52":
        r = np.sqrt(np.maximum(r2, 0.0))
        e = np.exp(-SQRT5 * r)
        K = signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * e
        phi = signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e
        return K, phi
    raise ValueError(f"unknown kernel {kind!r}")


def robust_cholesky(K, base_noise=0.0):
    eye = np.eye(K.shape[0])
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(K + (base_noise + jitter) * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise FitError("kernel matrix not positive definite after maximum jitter")


class GPRegressor(RegressorMixin, BaseEstimator):
    """Exact GP regression with an ARD stationary kernel and constant mean.

    Parameters
    ----------
    kernel : {"se", "matern52"}
    bounds : (lb, ub) or None
        Input box used to scale inputs to the unit cube.  ``None`` leaves
        inputs untouched.
    noise_variance : float
        Observation noise in standardized target units.
    learn_noise : bool
    optimize : bool
        If False, the hyperparameters given below are used as-is.
    lengthscales, signal_variance, constant_mean :
        Initial (or fixed) hyperparameters in the scaled/standardized space.
    n_restarts, n_steps, step_size :
        Restarts and Adam settings for marginal-likelihood ascent.
    warm_start : bool
        Start the first restart of a refit from the previous optimum.
    """

    def __init__(self, kernel="se", bounds=None, noise_variance=1e-6, learn_noise=False,
                 optimize=True, lengthscales=None, signal_variance=1.0, constant_mean=0.0,
                 normalize_y=True, n_restarts=3, n_steps=200, step_size=0.05,
                 warm_start=False, random_state=None):
        self.kernel = kernel
        self.bounds = bounds
        self.noise_variance = noise_variance
        self.learn_noise = learn_noise
        self.optimize = optimize
        self.lengthscales = lengthscales
        self.signal_variance = signal_variance
        self.constant_mean = constant_mean
        self.normalize_y = normalize_y
        self.n_restarts = n_restarts
        self.n_steps = n_steps
        self.step_size = step_size
        self.warm_start = warm_start
        self.random_state = random_state

    # -- parameter packing: [log ls (d), log sf2, log noise, mean]

    def _scale(self, Z):
        if self.bounds is None:
            return Z
        lb, ub = (np.asarray(b, dtype=float) for b in self.bounds)
        span = np.where(ub > lb, ub - lb, 1.0)
        return (Z - lb) / span

    def _input_span(self, d):
        if self.bounds is None:
            return np.ones(d)
        lb, ub = (np.asarray(b, dtype=float) for b in self.bounds)
        return np.where(ub > lb, ub - lb, 1.0)

    def _mll(self, theta, D, y, want_grad=True):
        d = D.shape[0]
        ls = np.exp(theta[:d])
        sf2 = math.exp(theta[d])
        noise = math.exp(theta[d + 1])
        c = theta[d + 2]
        Kf, phi = kernel_and_factor(D, ls, sf2, self.kernel)
        L, _ = robust_cholesky(Kf, noise)
        r = y - c
        alpha = cho_solve((L, True), r)
        N = y.size
        mll = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * N * math.log(2 * math.pi)
        if not want_grad:
            return mll, None
        Kinv, info = lapack.dpotri(L, lower=1)
        if info != 0:
            raise FitError("could not invert the kernel matrix")
        Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
        W = np.outer(alpha, alpha) - Kinv
        grad = np.empty_like(theta)
        grad[:d] = 0.5 * (D.reshape(d, -1) @ (W * phi).ravel()) / ls ** 2
        grad[d] = 0.5 * np.vdot(W, Kf)
        grad[d + 1] = 0.5 * noise * np.trace(W) if self.learn_noise else 0.0
        grad[d + 2] = alpha.sum()
        return mll, grad

    def _clip(self, theta, d):
        theta[:d] = np.clip(theta[:d], *LOG_LS_BOUNDS)
        theta[d] = np.clip(theta[d], *LOG_SF_BOUNDS)
        theta[d + 1] = np.clip(theta[d + 1], *LOG_NOISE_BOUNDS)
        return theta

    def _ascend(self, theta, D, y):
        """Adam ascent; returns best (mll, theta) seen, including the start."""
        d = D.shape[0]
        lr = self.step_size
        m1 = np.zeros_like(theta)
        m2 = np.zeros_like(theta)
        b1, b2, eps = 0.9, 0.999, 1e-8
        best_mll, best_theta = -np.inf, theta.copy()
        start_mll = None
        for k in range(1, self.n_steps + 1):
            try:
                mll, g = self._mll(theta, D, y)
            except FitError:
                break
            if start_mll is None:
                start_mll = mll
            if mll > best_mll:
                best_mll, best_theta = mll, theta.copy()
            m1 = b1 * m1 + (1 - b1) * g
            m2 = b2 * m2 + (1 - b2) * g * g
            step = lr * (m1 / (1 - b1 ** k)) / (np.sqrt(m2 / (1 - b2 ** k)) + eps)
            theta = self._clip(theta + step, d)
        try:
            mll, _ = self._mll(theta, D, y, want_grad=False)
            if mll > best_mll:
                best_mll, best_theta = mll, theta.copy()
        except FitError:
            pass
        return best_mll, best_theta, start_mll

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] < 2:
            raise SizeError("need at least two training points")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have inconsistent lengths")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")
        d = X.shape[1]
        U = self._scale(X)
        if self.normalize_y:
            y_mean = y.mean()
            y_std = y.std()
            if y_std < 1e-12:
                y_std = 1.0
        else:
            y_mean, y_std = 0.0, 1.0
        ys = (y - y_mean) / y_std
        D = _sq_diffs(U, U)

        ls0 = np.full(d, 0.5) if self.lengthscales is None else np.broadcast_to(
            np.asarray(self.lengthscales, dtype=float), (d,)).copy()
        theta0 = np.concatenate([np.log(ls0), [math.log(self.signal_variance),
                                               math.log(self.noise_variance), self.constant_mean]])
        if self.warm_start and hasattr(self, "theta_") and self.theta_.size == theta0.size:
            theta0 = self.theta_.copy()

        self.restart_log_ = []
        if self.optimize:
            gen = as_generator(self.random_state)
            starts = [self._clip(theta0.copy(), d)]
            for _ in range(max(self.n_restarts, 1) - 1):
                th = theta0.copy()
                th[:d] = gen.uniform(math.log(0.1), math.log(2.0), size=d)
                th[d] = gen.uniform(math.log(0.5), math.log(2.0))
                th[d + 2] = 0.0
                starts.append(th)
            best = (-np.inf, None)
            for th in starts:
                mll, theta, start_mll = self._ascend(th, D, ys)
                self.restart_log_.append((start_mll, mll))
                if theta is not None and mll > best[0]:
                    best = (mll, theta)
            if best[1] is None:
                raise FitError("marginal likelihood could not be evaluated at any restart")
            theta = best[1]
        else:
            theta = theta0

        self.theta_ = theta
        ls = np.exp(theta[:d])
        sf2 = math.exp(theta[d])
        noise = math.exp(theta[d + 1])
        Kf, _ = kernel_and_factor(D, ls, sf2, self.kernel)
        self.L_, self.jitter_ = robust_cholesky(Kf, noise)
        self.alpha_ = cho_solve((self.L_, True), ys - theta[d + 2])
        self.log_marginal_likelihood_value_ = self._mll(theta, D, ys, want_grad=False)[0]
        self.X_train_ = X
        self.U_train_ = U
        self.y_train_ = y
        self.y_mean_ = y_mean
        self.y_std_ = y_std
        return self

    @property
    def lengthscales_(self):
        check_is_fitted(self, "theta_")
        return np.exp(self.theta_[:-3])

    @property
    def signal_variance_(self):
        return math.exp(self.theta_[-3])

    @property
    def noise_variance_(self):
        return math.exp(self.theta_[-2])

    @property
    def constant_mean_(self):
        return self.theta_[-1]

    def _check_fitted(self):
        if not hasattr(self, "theta_"):
            raise NotFittedStateError("GPRegressor is not fitted")

    def predict(self, X, return_std=False, return_grad=False):
        """Posterior mean (and std, and their input gradients) in target units.

        The std is that of the latent function, excluding observation noise.
        Gradients are taken with respect to the unscaled inputs.
        """
        self._check_fitted()
        X = check_array(X)
        d = X.shape[1]
        U = self._scale(X)
        D = _sq_diffs(U, self.U_train_)
        ls = self.lengthscales_
        Ks, phi = kernel_and_factor(D, ls, self.signal_variance_, self.kernel)
        mean_s = self.constant_mean_ + Ks @ self.alpha_
        mean = self.y_mean_ + self.y_std_ * mean_s
        if not (return_std or return_grad):
            return mean
        V = solve_triangular(self.L_, Ks.T, lower=True)
        var = np.maximum(self.signal_variance_ - np.sum(V * V, axis=0), 0.0)
        std = self.y_std_ * np.sqrt(var)
        if not return_grad:
            return mean, std
        beta = cho_solve((self.L_, True), Ks.T)  # (N, n*)
        diff = U.T[:, :, None] - self.U_train_.T[:, None, :]  # (d, n*, N)
        G = -phi[None] * diff / (ls ** 2)[:, None, None]
        dmean_s = np.einsum("dsn,n->sd", G, self.alpha_)
        dvar_s = -2.0 * np.einsum("dsn,ns->sd", G, beta)
        sd_s = np.maximum(np.sqrt(var), STD_FLOOR)
        dstd_s = dvar_s / (2.0 * sd_s[:, None])
        chain = self.y_std_ / self._input_span(d)
        return mean, std, dmean_s * chain, dstd_s * chain

    def log_marginal_likelihood(self, theta=None):
        self._check_fitted()
        theta = self.theta_ if theta is None else np.asarray(theta, dtype=float)
        ys = (self.y_train_ - self.y_mean_) / self.y_std_
        return self._mll(theta, _sq_diffs(self.U_train_, self.U_train_), ys, want_grad=False)[0]

    def to_dict(self):
        self._check_fitted()
        return {
            "kernel": self.kernel,
            "bounds": None if self.bounds is None else [np.asarray(b, float).tolist() for b in self.bounds],
            "theta": self.theta_.tolist(),
            "X_train": self.X_train_.tolist(),
            "y_train": self.y_train_.tolist(),
            "normalize_y": self.normalize_y,
            "learn_noise": self.learn_noise,
        }

    @classmethod
    def from_dict(cls, data):
        theta = np.asarray(data["theta"], dtype=float)
        gp = cls(kernel=data["kernel"], bounds=data["bounds"], optimize=False,
                 lengthscales=np.exp(theta[:-3]), signal_variance=math.exp(theta[-3]),
                 noise_variance=math.exp(theta[-2]), constant_mean=float(theta[-1]),
                 normalize_y=data["normalize_y"], learn_noise=data.get("learn_noise", False))
        return gp.fit(np.asarray(data["X_train"]), np.asarray(data["y_train"]))


class GaussianSurrogate(BaseEstimator):
    """Independent :class:`GPRegressor` per objective over ``z = [x, t]``."""

    def __init__(self, kernel="se", bounds=None, noise_variance=1e-6, learn_noise=False,
                 n_restarts=3, n_steps=200, step_size=0.05, warm_start=True, random_state=None):
        self.kernel = kernel
        self.bounds = bounds
        self.noise_variance = noise_variance
        self.learn_noise = learn_noise
        self.n_restarts = n_restarts
        self.n_steps = n_steps
        self.step_size = step_size
        self.warm_start = warm_start
        self.random_state = random_state

    def fit(self, Z, Y):
        Z = check_array(Z)
        Y = check_array(Y, ensure_min_features=1)
        if Z.shape[0] < 2:
            raise SizeError("archive needs at least two records to fit a surrogate")
        gen = as_generator(self.random_state)
        seeds = gen.integers(0, 2**63 - 1, size=Y.shape[1])
        old = getattr(self, "models_", None)
        models = []
        for i in range(Y.shape[1]):
            gp = old[i] if (self.warm_start and old is not None and len(old) == Y.shape[1]) else GPRegressor()
            gp.set_params(kernel=self.kernel, bounds=self.bounds, noise_variance=self.noise_variance,
                          learn_noise=self.learn_noise, n_restarts=self.n_restarts,
                          n_steps=self.n_steps, step_size=self.step_size,
                          warm_start=self.warm_start, random_state=int(seeds[i]))
            models.append(gp.fit(Z, Y[:, i]))
        self.models_ = models
        self.n_features_in_ = Z.shape[1]
        return self

    @property
    def n_outputs_(self):
        check_is_fitted(self, "models_")
        return len(self.models_)

    def posterior(self, Z, return_grad=False):
        """Mean and std arrays of shape ``(N, m)``; with ``return_grad``
        also ``(N, m, d)`` input gradients of both."""
        if not hasattr(self, "models_"):
            raise NotFittedStateError("surrogate is not fitted")
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        outs = [gp.predict(Z, return_std=True, return_grad=return_grad) for gp in self.models_]
        mean = np.column_stack([o[0] for o in outs])
        std = np.column_stack([o[1] for o in outs])
        if not return_grad:
            return mean, std
        dmean = np.stack([o[2] for o in outs], axis=1)
        dstd = np.stack([o[3] for o in outs], axis=1)
        return mean, std, dmean, dstd

    def predict(self, Z):
        return self.posterior(Z)[0]

    def lcb(self, Z, beta=0.05, return_grad=False):
        """Lower confidence bound ``mean - beta * std`` per objective."""
        if beta < 0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        if not return_grad:
            mean, std = self.posterior(Z)
            return mean - beta * std
        mean, std, dmean, dstd = self.posterior(Z, return_grad=True)
        return mean - beta * std, dmean - beta * dstd

    def to_dict(self):
        check_is_fitted(self, "models_")
        return {"models": [gp.to_dict() for gp in self.models_], "params": {
            "kernel": self.kernel, "noise_variance": self.noise_variance,
            "learn_noise": self.learn_noise}}

    @classmethod
    def from_dict(cls, data):
        sur = cls(**data.get("params", {}))
        sur.models_ = [GPRegressor.from_dict(d) for d in data["models"]]
        sur.bounds = sur.models_[0].bounds
        sur.n_features_in_ = sur.models_[0].X_train_.shape[1]
        return sur


def augmented_bounds(problem):
    return (np.concatenate([problem.x_lb, problem.t_lb]), np.concatenate([problem.x_ub, problem.t_ub]))


def fit_surrogate(archive: EvaluationArchive, problem, surrogate: Optional[GaussianSurrogate] = None,
                  random_state=None, **params) -> GaussianSurrogate:
    """Fit (or refit) per-objective GPs on an archive of ``(x, t, y)`` records."""
    if len(archive) < 2:
        raise SizeError("archive needs at least two records to fit a surrogate")
    if surrogate is None:
        surrogate = GaussianSurrogate(bounds=augmented_bounds(problem), **params)
    if random_state is not None:
        surrogate.set_params(random_state=random_state)
    Z = np.hstack([archive.X, archive.T]) if problem.p else archive.X
    return surrogate.fit(Z, archive.Y)
