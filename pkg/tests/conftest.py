import sys

import numpy as np
import pytest

from ppslmobo.core import EvaluationArchive, RandomSource, space_filling_init
from ppslmobo.problems import make_problem
from ppslmobo.psmodel import ParetoSetModel, PsModelConfig
from ppslmobo.surrogate import GaussianSurrogate, augmented_bounds


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def p1():
    return make_problem("synth-P1")


def tiny_model(seed=0, hidden=(4,), rank=1, hyper=(8,), n_obj=2, n_var=2, n_param=1, perturb=0.3):
    """Small model whose LoRA path is active (random hypernetwork output layer)."""
    cfg = PsModelConfig(n_obj, n_var, n_param, (np.zeros(n_var), np.ones(n_var)), hidden=hidden,
                        rank=rank, hyper_hidden=hyper, t_bounds=(np.zeros(n_param), np.ones(n_param)))
    model = ParetoSetModel.init(cfg, RandomSource(seed))
    if perturb:
        gen = np.random.default_rng(seed + 100)
        model.hyper_W[-1] += perturb * gen.standard_normal(model.hyper_W[-1].shape)
        model.hyper_b[-1] += perturb * gen.standard_normal(model.hyper_b[-1].shape)
    return model


@pytest.fixture
def fitted_p1():
    """A GP surrogate fitted to 25 Latin-hypercube evaluations of synth-P1."""
    problem = make_problem("synth-P1")
    X, T = space_filling_init(RandomSource(7), 25, (problem.x_lb, problem.x_ub), (problem.t_lb, problem.t_ub))
    archive = EvaluationArchive()
    archive.extend(X, T, problem.evaluate_batch(X, T))
    sur = GaussianSurrogate(bounds=augmented_bounds(problem), n_restarts=1, n_steps=60, random_state=0)
    sur.fit(np.hstack([archive.X, archive.T]), archive.Y)
    return problem, archive, sur


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
