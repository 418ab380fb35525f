"""Run configuration: JSON schema, validation and estimator construction."""

from __future__ import annotations

import hashlib
import importlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .dynamic import ABLATIONS, DynamicPPSLMOBO
from .problems import PROBLEMS, ProblemSpecError, make_problem
from .runner import PPSLMOBO, ConfigError


@dataclass
class TrainSection:
    n_tasks: int = 20
    n_prefs: int = 10
    n_steps: int = 100
    eta_b: float = 1e-3
    eta_hn: float = 1e-5
    nu: float = 0.01
    beta: float = 0.05
    epsilon: float = 1e-3
    optimizer: str = "sgd"
    ideal_update: str = "archive"


@dataclass
class ModelSection:
    hidden: Optional[list] = None
    rank: int = 3
    hyper_hidden: list = field(default_factory=lambda: [1024, 1024, 1024, 1024])


@dataclass
class SurrogateSection:
    kernel: str = "se"
    restarts: int = 3
    steps: int = 200


@dataclass
class HeldoutSection:
    n: int = 10
    front_size: int = 100
    eval_every: int = 0


@dataclass
class DynamicSection:
    n_t: int = 20
    tau_t: int = 2
    T_max: int = 40
    window: int = 200
    ablation: str = "full"
    reference_size: int = 500


SECTIONS = {"train": TrainSection, "model": ModelSection, "surrogate": SurrogateSection,
            "heldout": HeldoutSection, "dynamic": DynamicSection}


@dataclass
class RunConfig:
    problem: str = "synth-P1"
    problem_kwargs: dict = field(default_factory=dict)
    mode: str = "static"
    seed: int = 0
    budget: int = 200
    n_init: Optional[int] = None
    batch_size: int = 5
    pool_size: int = 1000
    plugins: list = field(default_factory=list)
    train: TrainSection = field(default_factory=TrainSection)
    model: ModelSection = field(default_factory=ModelSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    heldout: HeldoutSection = field(default_factory=HeldoutSection)
    dynamic: DynamicSection = field(default_factory=DynamicSection)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}", key=sorted(unknown)[0])
        kwargs = {}
        for name, value in data.items():
            if name in SECTIONS:
                section = SECTIONS[name]
                if not isinstance(value, dict):
                    raise ConfigError(f"section {name!r} must be an object", key=name)
                bad = set(value) - {f.name for f in fields(section)}
                if bad:
                    key = sorted(bad)[0]
                    raise ConfigError(f"unknown key {key!r} in section {name!r}", key=key)
                kwargs[name] = section(**value)
            else:
                kwargs[name] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def validate(self):
        def need(cond, msg, key):
            if not cond:
                raise ConfigError(msg, key=key)

        need(self.mode in ("static", "dynamic"), f"mode must be 'static' or 'dynamic', got {self.mode!r}", "mode")
        need(isinstance(self.seed, int), "seed must be an integer", "seed")
        need(isinstance(self.batch_size, int) and self.batch_size >= 1, "batch_size must be >= 1", "batch_size")
        need(isinstance(self.pool_size, int) and self.pool_size >= self.batch_size,
             "pool_size must be an integer >= batch_size", "pool_size")
        need(self.n_init is None or (isinstance(self.n_init, int) and self.n_init >= 2),
             "n_init must be an integer >= 2", "n_init")
        need(self.train.optimizer in ("sgd", "adam"), "optimizer must be 'sgd' or 'adam'", "optimizer")
        need(self.train.ideal_update in ("archive", "running"),
             "ideal_update must be 'archive' or 'running'", "ideal_update")
        need(self.surrogate.kernel in ("se", "matern52"), "kernel must be 'se' or 'matern52'", "kernel")
        need(self.dynamic.ablation in ABLATIONS, f"ablation must be one of {ABLATIONS}", "ablation")
        if self.mode == "static":
            need(isinstance(self.budget, int) and self.budget >= 2, "budget must be an integer >= 2", "budget")
            need(self.n_init is None or self.n_init <= self.budget, "n_init exceeds budget", "n_init")
        self.load_plugins()
        need(self.problem in PROBLEMS, f"unknown problem {self.problem!r}", "problem")

    def load_plugins(self):
        for spec in self.plugins:
            try:
                importlib.import_module(spec)
            except ImportError as exc:
                raise ConfigError(f"cannot import plugin module {spec!r}: {exc}", key="plugins") from exc

    def make_problem(self):
        try:
            return make_problem(self.problem, **self.problem_kwargs)
        except (TypeError, ProblemSpecError) as exc:
            raise ConfigError(f"cannot build problem {self.problem!r}: {exc}", key="problem_kwargs") from exc

    def build_estimator(self):
        t, mdl, s = self.train, self.model, self.surrogate
        common = dict(n_init=self.n_init, batch_size=self.batch_size, pool_size=self.pool_size,
                      n_tasks=t.n_tasks, n_prefs=t.n_prefs, n_steps=t.n_steps, eta_b=t.eta_b,
                      eta_hn=t.eta_hn, nu=t.nu, beta=t.beta, epsilon=t.epsilon, optimizer=t.optimizer,
                      ideal_update=t.ideal_update,
                      hidden=None if mdl.hidden is None else tuple(mdl.hidden), rank=mdl.rank,
                      hyper_hidden=tuple(mdl.hyper_hidden), kernel=s.kernel, gp_restarts=s.restarts,
                      gp_steps=s.steps, front_size=self.heldout.front_size, random_state=self.seed)
        if self.mode == "dynamic":
            d = self.dynamic
            return DynamicPPSLMOBO(n_t=d.n_t, tau_t=d.tau_t, T_max=d.T_max, window=d.window,
                                   ablation=d.ablation, reference_size=d.reference_size, **common)
        return PPSLMOBO(budget=self.budget, n_heldout=self.heldout.n,
                        eval_every=self.heldout.eval_every, **common)


def run(config: RunConfig, est=None, problem=None):
    """Fit the configured estimator on the configured problem; returns ``(estimator, problem)``."""
    problem = config.make_problem() if problem is None else problem
    est = config.build_estimator() if est is None else est
    return est.fit(problem), problem
