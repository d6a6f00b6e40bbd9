"""Synthetic continual-learning simulator.

Drives replay strategies (trigger baselines and the engine itself) through
multi-stage task sequences with a surrogate learner, and reports the
average-forgetting metric plus replay cost accounting.  Claims made with
this simulator are directional: it reproduces orderings between strategies,
not absolute benchmark numbers.
"""

from .learner import LearnerState, SyntheticTask, learner_drift, learner_train, observed_loss
from .metrics import ForgettingReport, forgetting_metric
from .runner import compare_strategies, run_strategy
from .scenario import ScenarioConfig, default_scenario, load_scenario
from .strategies import StrategyConfig, strategy_catalog

__all__ = [
    "ForgettingReport",
    "LearnerState",
    "ScenarioConfig",
    "StrategyConfig",
    "SyntheticTask",
    "compare_strategies",
    "default_scenario",
    "forgetting_metric",
    "learner_drift",
    "learner_train",
    "load_scenario",
    "observed_loss",
    "run_strategy",
    "strategy_catalog",
]
