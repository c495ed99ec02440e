"""Index policies for stochastic bandits.

All policies pull each arm once, then pull an arm with the largest index,
breaking ties towards the lowest arm number.  Arms are numbered from 0.

Statistics are kept on the raw reward scale.  Policies whose index lives on
[0, 1] (Bernoulli and quadratic divergences, empirical KL-UCB) divide rewards
by ``rescale_bound`` and multiply the index back; the variance-based baselines
scale their [0, 1] constants instead.

The parametric policies are vectorized: :meth:`Policy.choose` takes arrays of
shape ``(replications, arms)`` and selects one arm per row, which lets the
simulator advance many independent runs in lockstep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .divergence import Divergence, DomainError, Family
from .empirical import (
    EmpiricalDistribution,
    el_upper_bound_rows,
    kinf_upper_bound,
)
from .index import ExplorationSchedule, ScheduleKind, kl_index

__all__ = [
    "PolicyState",
    "Policy",
    "KLUCB",
    "EmpiricalKLUCB",
    "UCB",
    "UCBV",
    "UCBTuned",
    "PolicySpec",
    "parse_divergence",
]


@dataclass
class PolicyState:
    """Per-run sufficient statistics.  Owned by a single simulation run."""

    n_arms: int
    rescale_bound: float = 1.0
    t: int = 0
    pulls: np.ndarray = None
    reward_sum: np.ndarray = None
    reward_sq_sum: np.ndarray = None
    empirical: Optional[List[EmpiricalDistribution]] = None
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_arms < 1:
            raise ValueError("need at least one arm")
        k = self.n_arms
        if self.pulls is None:
            self.pulls = np.zeros(k, dtype=np.int64)
        if self.reward_sum is None:
            self.reward_sum = np.zeros(k)
        if self.reward_sq_sum is None:
            self.reward_sq_sum = np.zeros(k)

    def means(self) -> np.ndarray:
        return self.reward_sum / self.pulls


class Policy:
    """Common machinery; subclasses define :meth:`indices`."""

    name = "policy"
    vectorized = True

    def __init__(self, schedule: ExplorationSchedule = ExplorationSchedule(), rescale_bound: float = 1.0):
        if not rescale_bound > 0:
            raise ValueError("rescale_bound must be positive")
        self.schedule = schedule
        self.rescale_bound = float(rescale_bound)

    def __repr__(self):
        return f"{type(self).__name__}({self.name}, bound={self.rescale_bound:g})"

    def new_state(self, n_arms: int) -> PolicyState:
        return PolicyState(n_arms, self.rescale_bound)

    def indices(self, pulls, sums, sq_sums, t):
        """Index of every arm (raw scale); arrays of shape ``(..., n_arms)``."""
        raise NotImplementedError

    def choose(self, pulls, sums, sq_sums, t) -> np.ndarray:
        """Arm with the largest index in each row (first one on ties)."""
        return np.argmax(self.indices(pulls, sums, sq_sums, t), axis=-1)

    def select_arm(self, state: PolicyState) -> int:
        if state.t < state.n_arms:
            return state.t
        return int(
            self.choose(
                state.pulls[None, :], state.reward_sum[None, :], state.reward_sq_sum[None, :], state.t
            )[0]
        )

    def compute_index(self, state: PolicyState, arm: int) -> float:
        if state.pulls[arm] < 1:
            raise ValueError(f"arm {arm} has not been pulled yet")
        if state.t < 1:
            raise ValueError("index needs t >= 1")
        return float(
            self.indices(state.pulls, state.reward_sum, state.reward_sq_sum, state.t)[arm]
        )

    def check_reward(self, reward: float):
        if not 0.0 <= reward <= self.rescale_bound:
            raise DomainError(f"reward {reward} outside [0, {self.rescale_bound:g}]")

    def update(self, state: PolicyState, arm: int, reward: float) -> PolicyState:
        self.check_reward(reward)
        state.t += 1
        state.pulls[arm] += 1
        state.reward_sum[arm] += reward
        state.reward_sq_sum[arm] += reward * reward
        return state


class KLUCB(Policy):
    """kl-UCB with a given divergence."""

    def __init__(self, divergence: Divergence, schedule=ExplorationSchedule(), rescale_bound=1.0):
        super().__init__(schedule, rescale_bound)
        self.divergence = divergence
        self.rescaled = divergence.family in (Family.BERNOULLI, Family.QUADRATIC)
        self.name = f"klucb-{divergence.name}-{schedule.name}"

    def check_reward(self, reward):
        if self.rescaled:
            return super().check_reward(reward)
        d = self.divergence
        if not d.mu_lo <= reward <= d.mu_hi:
            raise DomainError(f"reward {reward} outside [{d.mu_lo}, {d.mu_hi}] for {d.name}")

    def _stats(self, pulls, sums, t):
        d = self.divergence
        scale = self.rescale_bound if self.rescaled else 1.0
        mu = np.clip(sums / (pulls * scale), d.mu_lo, d.mu_hi)
        eps = self.schedule(t) / pulls
        return mu, eps, scale

    def indices(self, pulls, sums, sq_sums, t):
        mu, eps, scale = self._stats(pulls, sums, t)
        return scale * kl_index(self.divergence, mu, eps)

    def choose(self, pulls, sums, sq_sums, t):
        # Only the most-pulled arm's index is solved for; another arm can beat
        # it only if d(mu_a, U_lead) <= eps_a, so only arms passing that test
        # get their own index solved.
        d = self.divergence
        if d.family in (Family.GAUSSIAN, Family.QUADRATIC):
            return super().choose(pulls, sums, sq_sums, t)
        pulls = np.atleast_2d(pulls)
        mu, eps, _ = self._stats(pulls, np.atleast_2d(sums), t)
        rows = np.arange(pulls.shape[0])
        lead = np.argmax(pulls, axis=1)
        u_lead = kl_index(d, mu[rows, lead], eps[rows, lead])[:, None]
        with np.errstate(all="ignore"):
            # slightly generous so rounding never drops a tied arm
            reach = (mu >= u_lead) | (d._eval(mu, u_lead) <= eps * (1.0 + 1e-9) + 1e-15)
        reach[rows, lead] = False
        r_idx, a_idx = np.nonzero(reach)
        if r_idx.size == 0:
            return lead
        u = np.full(mu.shape, -np.inf)
        u[rows, lead] = u_lead[:, 0]
        u[r_idx, a_idx] = kl_index(d, mu[r_idx, a_idx], eps[r_idx, a_idx])
        return np.argmax(u, axis=1)


class UCB(Policy):
    """``mu + B sqrt(f(t) / (2 N))``, i.e. kl-UCB with ``d = 2 (mu - mu')^2``."""

    def __init__(self, schedule=ExplorationSchedule(), rescale_bound=1.0):
        super().__init__(schedule, rescale_bound)
        self.name = "ucb" if schedule.kind is ScheduleKind.LOG_T else f"ucb-{schedule.name}"

    def indices(self, pulls, sums, sq_sums, t):
        eps = self.schedule(t) / pulls
        return sums / pulls + self.rescale_bound * np.sqrt(eps / 2.0)


def _variance(pulls, sums, sq_sums):
    mu = sums / pulls
    return mu, np.maximum(sq_sums / pulls - mu * mu, 0.0)


class UCBV(Policy):
    """``mu + sqrt(2 v f(t) / N) + 3 B f(t) / N`` with the biased variance ``v``."""

    name = "ucbv"

    def indices(self, pulls, sums, sq_sums, t):
        f = self.schedule(t)
        mu, v = _variance(pulls, sums, sq_sums)
        return mu + np.sqrt(2.0 * v * f / pulls) + 3.0 * self.rescale_bound * f / pulls


class UCBTuned(Policy):
    """``mu + sqrt(min(B^2/4, v + B^2 sqrt(2 f(t)/N)) f(t) / N)``."""

    name = "ucbtuned"

    def indices(self, pulls, sums, sq_sums, t):
        f = self.schedule(t)
        b2 = self.rescale_bound**2
        mu, v = _variance(pulls, sums, sq_sums)
        spread = np.minimum(b2 / 4.0, v + b2 * np.sqrt(2.0 * f / pulls))
        return mu + np.sqrt(spread * f / pulls)


class EmpiricalKLUCB(Policy):
    """Empirical KL-UCB: the index is the augmented-support EL bound of each
    arm's rescaled empirical distribution at radius ``f(t) / N``.

    Arm selection avoids recomputing every index each round.  Non-leading arms
    keep an index computed at a slightly later time, which upper-bounds their
    current index until that time or their next pull.  The most-pulled arm is
    kept when a moment bound certifies its index exceeds all of those by a
    margin; otherwise indices are solved exactly.
    """

    vectorized = False
    lookahead = 0.01
    margin = 1e-7

    def __init__(self, schedule=ExplorationSchedule(), rescale_bound=1.0):
        super().__init__(schedule, rescale_bound)
        self.name = f"empklucb-{schedule.name}"

    def new_state(self, n_arms):
        state = super().new_state(n_arms)
        state.empirical = [EmpiricalDistribution() for _ in range(n_arms)]
        return state

    def update(self, state, arm, reward):
        super().update(state, arm, reward)
        state.empirical[arm].add(reward / self.rescale_bound)
        return state

    def indices(self, pulls, sums, sq_sums, t):
        raise TypeError("empirical KL-UCB indices need the empirical distributions; use compute_index")

    def _unit_index(self, state, arm, t):
        # the sorted view makes equal distributions give bitwise-equal indices
        dist = state.empirical[arm]
        eps = self.schedule(t) / state.pulls[arm]
        return float(el_upper_bound_rows(dist.support, dist.counts / dist.n, eps)[0])

    def _unit_indices(self, state, arms, t):
        # one padded batch; zero weights mark the padding
        dists = [state.empirical[a] for a in arms]
        width = max(len(d) for d in dists)
        x = np.zeros((len(arms), width))
        w = np.zeros((len(arms), width))
        for i, d in enumerate(dists):
            x[i, : len(d)] = d.support
            w[i, : len(d)] = d.counts / d.n
        f = self.schedule(t)
        eps = np.array([f / state.pulls[a] for a in arms])
        return el_upper_bound_rows(x, w, eps)

    def compute_index(self, state, arm):
        if state.pulls[arm] < 1:
            raise ValueError(f"arm {arm} has not been pulled yet")
        return self.rescale_bound * self._unit_index(state, arm, state.t)

    def all_indices(self, state) -> np.ndarray:
        """Index of every arm at the current round (raw scale), solved in one batch."""
        if np.any(state.pulls < 1):
            raise ValueError("every arm needs a pull before indices exist")
        return self.rescale_bound * self._unit_indices(state, list(range(state.n_arms)), state.t)

    def exact_choice(self, state) -> int:
        """Argmax of freshly solved indices, without shortcuts."""
        values = [self._unit_index(state, a, state.t) for a in range(state.n_arms)]
        return int(np.argmax(values))

    def select_arm(self, state):
        t, k = state.t, state.n_arms
        if t < k:
            return t
        pulls = state.pulls
        lead = int(np.argmax(pulls))
        cache = state.cache
        stale = [
            a
            for a in range(k)
            if a != lead and (a not in cache or cache[a][0] != pulls[a] or t > cache[a][1])
        ]
        if stale:
            t_hi = t + max(1, int(t * self.lookahead))
            for a, v in zip(stale, self._unit_indices(state, stale, t_hi)):
                cache[a] = (int(pulls[a]), t_hi, v)
        bounds = [-math.inf if a == lead else cache[a][2] for a in range(k)]
        if k == 1:
            return lead
        eps_lead = self.schedule(t) / pulls[lead]
        dist = state.empirical[lead]

        def certified(bounds):
            level = max(bounds) + self.margin
            return (
                level < 1.0
                and kinf_upper_bound(dist.n, dist.sums, level) < eps_lead * (1.0 - 1e-9) - 1e-14
            )

        if certified(bounds):
            return lead
        # the look-ahead bounds may be loose: solve the other arms at round t
        others = [a for a in range(k) if a != lead]
        values = [-math.inf] * k
        for a, v in zip(others, self._unit_indices(state, others, t)):
            values[a] = v
        if certified(values):
            return lead
        values[lead] = self._unit_index(state, lead, t)
        return int(np.argmax(values))


def parse_divergence(text: str) -> Divergence:
    """``bernoulli``, ``binomial:n``, ``poisson``, ``negbin:r``, ``geometric``,
    ``gaussian:sigma2``, ``gamma:alpha``, ``exponential``, ``quadratic[:scale]``."""
    name, _, arg = text.strip().lower().partition(":")
    simple = {
        "bernoulli": Divergence.bernoulli,
        "poisson": Divergence.poisson,
        "exponential": Divergence.exponential,
        "geometric": Divergence.geometric,
    }
    param = {
        "binomial": lambda v: Divergence.binomial(int(v)),
        "negbin": Divergence.negbin,
        "gaussian": Divergence.gaussian,
        "gamma": Divergence.gamma,
        "quadratic": Divergence.quadratic,
    }
    if name in simple:
        if arg:
            raise ValueError(f"divergence {name!r} takes no parameter")
        return simple[name]()
    if name in param:
        if not arg:
            if name == "quadratic":
                return Divergence.quadratic()
            raise ValueError(f"divergence {name!r} needs a parameter, e.g. {name}:1")
        return param[name](float(arg))
    raise ValueError(f"unknown divergence {text!r}")


_POLICY_KINDS = ("klucb", "empklucb", "ucb", "ucb-cor2", "ucbv", "ucbtuned")


@dataclass(frozen=True)
class PolicySpec:
    """Policy description as written in scenario files, e.g.
    ``klucb bernoulli logt`` or ``empklucb logt`` or ``ucbv``."""

    kind: str
    divergence: Optional[Divergence] = None
    schedule: ExplorationSchedule = ExplorationSchedule()

    @classmethod
    def parse(cls, text: str) -> "PolicySpec":
        parts = text.split()
        if not parts:
            raise ValueError("empty policy specification")
        kind, args = parts[0].lower(), parts[1:]
        if kind not in _POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")
        if kind == "klucb":
            if not 1 <= len(args) <= 2:
                raise ValueError("klucb takes a divergence and an optional schedule")
            sched = ExplorationSchedule.parse(args[1]) if len(args) == 2 else ExplorationSchedule()
            return cls(kind, parse_divergence(args[0]), sched)
        if kind == "empklucb":
            if len(args) > 1:
                raise ValueError("empklucb takes an optional schedule")
            sched = ExplorationSchedule.parse(args[0]) if args else ExplorationSchedule()
            return cls(kind, None, sched)
        if args:
            raise ValueError(f"{kind} takes no arguments")
        if kind == "ucb-cor2":
            return cls(kind, None, ExplorationSchedule(ScheduleKind.LOG_PLUS_3LOGLOG))
        return cls(kind)

    def text(self) -> str:
        if self.kind == "klucb":
            return f"klucb {self.divergence.name} {self.schedule.name}"
        if self.kind == "empklucb":
            return f"empklucb {self.schedule.name}"
        return self.kind

    @property
    def label(self) -> str:
        return self.text().replace(" ", "-")

    def build(self, rescale_bound: float = 1.0) -> Policy:
        if self.kind == "klucb":
            return KLUCB(self.divergence, self.schedule, rescale_bound)
        if self.kind == "empklucb":
            return EmpiricalKLUCB(self.schedule, rescale_bound)
        if self.kind in ("ucb", "ucb-cor2"):
            return UCB(self.schedule, rescale_bound)
        if self.kind == "ucbv":
            return UCBV(self.schedule, rescale_bound)
        return UCBTuned(self.schedule, rescale_bound)
