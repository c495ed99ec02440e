"""kl-UCB and empirical KL-UCB bandit policies with a Monte-Carlo regret harness."""

from .divergence import Divergence, DomainError, Family
from .empirical import EmpiricalDistribution, el_upper_bound, kinf
from .environments import (
    Bernoulli,
    FiniteSupport,
    Gaussian,
    TruncatedExponential,
    TruncatedPoisson,
    parse_arm,
)
from .index import ExplorationSchedule, ScheduleKind, kl_index
from .policies import UCB, UCBV, EmpiricalKLUCB, KLUCB, PolicySpec, UCBTuned
from .simulator import RegretSummary, Scenario, run_monte_carlo, run_single

__version__ = "0.1.0"
