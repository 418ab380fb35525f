"""Parametric Pareto set learning for expensive multi-objective optimization.

A hypernetwork adapts a preference-conditioned Pareto-set model to a task
parameter, trained on Gaussian-process surrogates; batches are chosen by
greedy hypervolume improvement.
"""

__version__ = "0.1.0"

from .dynamic import DynamicPPSLMOBO
from .problems import make_problem, register_callback, register_problem
from .psmodel import ParetoSetModel, PsModelConfig
from .runner import PPSLMOBO
from .surrogate import GaussianSurrogate, GPRegressor

__all__ = ["PPSLMOBO", "DynamicPPSLMOBO", "ParetoSetModel", "PsModelConfig", "GaussianSurrogate",
           "GPRegressor", "make_problem", "register_problem", "register_callback", "__version__"]
