import json
import math

import numpy as np
import pytest

from ppslmobo.core import EvaluationArchive, StateError
from ppslmobo.surrogate import (GaussianSurrogate, GPRegressor, SizeError, fit_surrogate,
                                kernel_and_factor)


def smooth(x):
    return np.sin(3 * x[:, 0]) + 0.5 * x[:, 0] ** 2


def fixed_gp(**kw):
    base = dict(optimize=False, normalize_y=False, lengthscales=[0.7], signal_variance=1.3,
                noise_variance=1e-6, constant_mean=0.0)
    base.update(kw)
    return GPRegressor(**base)


class TestClosedForm:
    def test_two_symmetric_points_at_midpoint(self):
        ls, sf2, noise = 0.7, 1.3, 1e-6
        X = np.array([[-1.0], [1.0]])
        y = np.array([0.4, -1.1])
        gp = fixed_gp(lengthscales=[ls], signal_variance=sf2, noise_variance=noise).fit(X, y)
        mean, std = gp.predict(np.array([[0.0]]), return_std=True)
        # hand-evaluated posterior with the 2x2 inverse
        k = sf2 * math.exp(-1.0 / (2 * ls ** 2))
        a = sf2 + noise + gp.jitter_
        b = sf2 * math.exp(-4.0 / (2 * ls ** 2))
        det = a * a - b * b
        Kinv = np.array([[a, -b], [-b, a]]) / det
        kv = np.array([k, k])
        assert mean[0] == pytest.approx(kv @ Kinv @ y, abs=1e-10)
        assert std[0] == pytest.approx(math.sqrt(sf2 - kv @ Kinv @ kv), abs=1e-10)

    def test_kernel_symmetry(self, rng):
        for kind in ("se", "matern52"):
            A, B = rng.random((5, 3)), rng.random((7, 3))
            DA = (A.T[:, :, None] - B.T[:, None, :]) ** 2
            DB = (B.T[:, :, None] - A.T[:, None, :]) ** 2
            ls = rng.uniform(0.2, 2, 3)
            K1, _ = kernel_and_factor(DA, ls, 1.7, kind)
            K2, _ = kernel_and_factor(DB, ls, 1.7, kind)
            assert np.max(np.abs(K1 - K2.T)) <= 1e-15


class TestFit:
    def test_interpolates_training_points(self, rng):
        X = rng.random((30, 1))
        y = smooth(X)
        gp = GPRegressor(random_state=0).fit(X, y)
        mean, std = gp.predict(X, return_std=True)
        s = y.std()
        assert np.max(np.abs(mean - y)) <= 1e-3 * s
        assert np.max(std) <= 1e-2 * s

    def test_reverts_to_prior_far_away(self, rng):
        X = rng.random((30, 1))
        gp = GPRegressor(random_state=0).fit(X, smooth(X))
        far = np.array([[1.0 + 10 * gp.lengthscales_[0] + 5.0]])
        mean, std = gp.predict(far, return_std=True)
        prior_mean = gp.y_mean_ + gp.y_std_ * gp.constant_mean_
        prior_std = gp.y_std_ * math.sqrt(gp.signal_variance_)
        assert abs(mean[0] - prior_mean) <= 1e-3 * gp.y_std_
        assert abs(std[0] - prior_std) <= 1e-3 * gp.y_std_

    def test_constant_function(self, rng):
        X = rng.random((20, 2))
        gp = GPRegressor(random_state=0).fit(X, np.full(20, 3.25))
        assert np.max(np.abs(gp.predict(rng.random((50, 2))) - 3.25)) <= 1e-3

    def test_every_restart_improves_likelihood(self, rng):
        X = rng.random((30, 1))
        gp = GPRegressor(n_restarts=3, random_state=1).fit(X, smooth(X))
        assert len(gp.restart_log_) == 3
        assert all(best >= start for start, best in gp.restart_log_)
        assert gp.log_marginal_likelihood() == pytest.approx(max(b for _, b in gp.restart_log_))

    def test_duplicate_record_does_not_crash(self):
        X = np.array([[0.5, 0.5], [0.5, 0.5]])
        gp = GPRegressor(random_state=0).fit(X, np.array([1.0, 1.0]))
        assert np.all(np.isfinite(gp.predict(X)))

    def test_ard_detects_irrelevant_coordinate(self, rng):
        Z = rng.random((40, 2))
        gp = GPRegressor(random_state=0, n_restarts=2).fit(Z, np.sin(4 * Z[:, 0]))
        ls = gp.lengthscales_
        assert ls[1] >= 5 * ls[0]

    def test_deterministic(self, rng):
        X = rng.random((15, 2))
        a = GPRegressor(random_state=3).fit(X, smooth(X))
        b = GPRegressor(random_state=3).fit(X, smooth(X))
        assert np.array_equal(a.theta_, b.theta_)

    def test_too_small(self):
        with pytest.raises(SizeError):
            GPRegressor().fit(np.zeros((1, 2)), np.zeros(1))

    def test_matern_fits(self, rng):
        X = rng.random((20, 1))
        gp = GPRegressor(kernel="matern52", random_state=0).fit(X, smooth(X))
        assert np.max(np.abs(gp.predict(X) - smooth(X))) < 1e-3

    def test_analytic_mll_gradient(self, rng):
        X = rng.random((12, 2))
        gp = GPRegressor(learn_noise=True, random_state=0, n_steps=5).fit(X, smooth(X))
        D = (gp.U_train_.T[:, :, None] - gp.U_train_.T[:, None, :]) ** 2
        ys = (gp.y_train_ - gp.y_mean_) / gp.y_std_
        theta = np.array([math.log(0.4), math.log(0.9), math.log(1.2), math.log(1e-2), 0.1])
        _, g = gp._mll(theta, D, ys)
        h = 1e-6
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd = (gp._mll(theta + e, D, ys, False)[0] - gp._mll(theta - e, D, ys, False)[0]) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestSurrogate:
    def test_lcb_relations(self, fitted_p1, rng):
        problem, archive, sur = fitted_p1
        Z = rng.random((200, 3))
        mean, std = sur.posterior(Z)
        assert np.all(std >= 0)
        assert np.array_equal(sur.lcb(Z, 0.0), mean)
        assert np.all(sur.lcb(Z, 0.7) <= mean)
        with pytest.raises(ValueError):
            sur.lcb(Z, -0.1)

    def test_lcb_at_training_point_matches_observation(self, fitted_p1):
        problem, archive, sur = fitted_p1
        Z = np.hstack([archive.X, archive.T])
        assert np.max(np.abs(sur.lcb(Z, 0.05) - archive.Y)) < 1e-3

    def test_input_gradients(self, fitted_p1, rng):
        problem, archive, sur = fitted_p1
        Z = rng.uniform(0.05, 0.95, (20, 3))
        mean, std, dmean, dstd = sur.posterior(Z, return_grad=True)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            mp, sp = sur.posterior(Z + e)
            mm, sm = sur.posterior(Z - e)
            assert np.allclose(dmean[:, :, j], (mp - mm) / (2 * h), rtol=1e-4, atol=1e-6)
            assert np.allclose(dstd[:, :, j], (sp - sm) / (2 * h), rtol=1e-4, atol=1e-6)

    def test_variance_never_negative(self, fitted_p1, rng):
        _, _, sur = fitted_p1
        assert np.all(sur.posterior(rng.random((10_000, 3)))[1] >= 0)

    def test_unfitted(self):
        with pytest.raises(StateError):
            GaussianSurrogate().posterior(np.zeros((1, 2)))

    def test_round_trip(self, fitted_p1, rng):
        _, _, sur = fitted_p1
        back = GaussianSurrogate.from_dict(json.loads(json.dumps(sur.to_dict())))
        Z = rng.random((10, 3))
        a, b = sur.posterior(Z), back.posterior(Z)
        assert np.allclose(a[0], b[0], atol=1e-12) and np.allclose(a[1], b[1], atol=1e-12)

    def test_fit_surrogate_from_archive(self, p1):
        arc = EvaluationArchive()
        with pytest.raises(SizeError):
            fit_surrogate(arc, p1)
        arc.extend([[0.1, 0.2], [0.8, 0.3], [0.5, 0.9]], [[0.1], [0.5], [0.9]],
                   p1.evaluate_batch([[0.1, 0.2], [0.8, 0.3], [0.5, 0.9]], [[0.1], [0.5], [0.9]]))
        sur = fit_surrogate(arc, p1, n_restarts=1, n_steps=20, random_state=0)
        assert sur.n_outputs_ == 2


def test_thirty_point_fit_is_fast(rng):
    import time
    X = rng.random((30, 3))
    tic = time.perf_counter()
    GaussianSurrogate(n_restarts=3, n_steps=200, random_state=0).fit(X, np.column_stack([smooth(X), X[:, 1]]))
    assert time.perf_counter() - tic < 5.0
