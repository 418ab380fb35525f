import numpy as np
import pytest

from ppslmobo.core import EvaluationArchive
from ppslmobo.dynamic import DynamicPPSLMOBO, ablation_mode, degenerate_task_dist, online_time
from ppslmobo.metrics import igd, migd
from ppslmobo.problems import make_problem
from ppslmobo.runner import ConfigError
from ppslmobo.surrogate import GaussianSurrogate

SMALL = dict(n_t=10, tau_t=2, T_max=6, n_init=20, batch_size=5, pool_size=40, hidden=(16, 16),
             hyper_hidden=(16,), n_steps=5, gp_steps=20, gp_restarts=1, front_size=20, reference_size=100)


def run_by_generation(est, problem, check):
    est.start(problem)
    while est.state_.generation < est.T_max:
        est.step_generation()
        check(est)
    return est


def test_degenerate_distribution():
    draws = degenerate_task_dist(0.3).sample(None, 20)
    assert draws.shape == (20, 1) and np.all(draws == 0.3)


def test_unknown_ablation():
    assert ablation_mode("no_history") == "no_history"
    with pytest.raises(ConfigError):
        ablation_mode("partial")
    with pytest.raises(ConfigError):
        DynamicPPSLMOBO(ablation="partial", **SMALL).fit(make_problem("synth-D1"))


def test_fifo_capacity_arithmetic():
    a = EvaluationArchive(capacity=200)
    for g in range(50):
        a.extend(np.full((5, 1), g), np.zeros((5, 1)), np.zeros((5, 2)), generation=g)
    assert len(a) == 200
    assert min(info["generation"] for info in a.info) == 10


def test_window_and_causality_every_generation():
    def check(est):
        g = est.state_.generation - 1
        assert len(est.archive_) <= est.window
        assert all(info["generation"] <= g for info in est.archive_.info)
        assert np.all(est.archive_.T[:, 0] <= est.state_.t)

    est = run_by_generation(DynamicPPSLMOBO(window=25, **SMALL), make_problem("synth-D1"), check)
    assert len(est.archive_) == 25
    assert len(est.evaluations_) == 20 + 6 * 5


def test_environment_time_is_non_decreasing():
    est = DynamicPPSLMOBO(**SMALL).fit(make_problem("synth-D1"))
    ts = [r.t for r in est.history_]
    assert ts == sorted(ts)
    assert ts == [0.0, 0.0, 0.1, 0.1, 0.2, 0.2]
    assert [online_time(tau, 40) for tau in (0, 20, 40)] == [0.0, 0.5, 1.0]


def test_budget_and_stop():
    problem = make_problem("synth-D1")
    est = DynamicPPSLMOBO(**SMALL).fit(problem)
    assert problem.n_evals == est.total_evaluations(problem) == 50
    with pytest.raises(StopIteration):
        est.step_generation()


def test_training_queries_only_touch_current_time(monkeypatch):
    seen = []
    original = GaussianSurrogate.lcb

    def spy(self, Z, beta=0.05, return_grad=False):
        seen.append(np.unique(Z[:, -1]))
        return original(self, Z, beta, return_grad)

    monkeypatch.setattr(GaussianSurrogate, "lcb", spy)
    dyn = DynamicPPSLMOBO(**{**SMALL, "T_max": 3})
    dyn.start(make_problem("synth-D1"))
    for _ in range(3):
        seen.clear()
        dyn.step_generation()
        t_now = dyn.state_.log[-1].t
        assert seen and all(np.array_equal(u, [t_now]) for u in seen)


def test_no_history_trains_on_last_batch_only():
    est = DynamicPPSLMOBO(ablation="no_history", **SMALL).fit(make_problem("synth-D1"))
    sizes = [r.train_size for r in est.history_]
    assert sizes[0] == 20  # generation 0 has only the initial design
    assert all(s <= 5 for s in sizes[1:])


def test_random_ablation_never_trains():
    est = DynamicPPSLMOBO(ablation="random", **SMALL)
    est.start(make_problem("synth-D1"))
    before = [w.copy() for w in est.model_.parameters()]
    while est.state_.generation < est.T_max:
        est.step_generation()
    for a, b in zip(before, est.model_.parameters()):
        np.testing.assert_array_equal(a, b)


def test_logged_igd_matches_offline_recompute():
    est = DynamicPPSLMOBO(**SMALL).fit(make_problem("synth-D1"))
    problem = make_problem("synth-D1")
    for rec in est.history_:
        ref = problem.pareto_front([rec.t], SMALL["reference_size"])
        assert igd(ref, rec.front) == pytest.approx(rec.igd, abs=1e-12)
    assert est.migd_ == pytest.approx(migd([r.igd for r in est.history_]), abs=1e-12)
    assert est.mhv_ > 0


def test_seeded_runs_repeat():
    a = DynamicPPSLMOBO(random_state=2, **SMALL).fit(make_problem("synth-D1"))
    b = DynamicPPSLMOBO(random_state=2, **SMALL).fit(make_problem("synth-D1"))
    assert a.evaluations_.Y.tobytes() == b.evaluations_.Y.tobytes()
    assert a.migd_ == b.migd_
