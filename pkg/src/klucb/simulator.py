"""Monte-Carlo regret simulation.

Regret is pseudo-regret: each pull of arm ``a`` adds the gap
``max_b mu_b - mu_a`` computed from the true means.  Trajectories are
recorded at checkpoint rounds only.

Vectorized policies run a whole block of replications in lockstep; the
empirical policy runs one replication at a time.  Either way replication
``r`` sees the same rewards and produces the same trace, so summaries are
bit-identical across reruns and independent of block size or thread count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .environments import ArmModel, RewardBank
from .policies import Policy, PolicySpec

__all__ = [
    "Scenario",
    "RegretSummary",
    "default_checkpoints",
    "nearest_rank",
    "run_batch",
    "run_single",
    "run_monte_carlo",
]

log = logging.getLogger(__name__)

QUANTILES = (0.005, 0.995, 0.9995)


def default_checkpoints(horizon: int, count: int = 50) -> Tuple[int, ...]:
    """About ``count`` log-spaced rounds in ``[1, horizon]``, always ending at ``horizon``."""
    pts = np.unique(np.rint(np.logspace(0.0, math.log10(horizon), count)).astype(np.int64))
    pts = pts[(pts >= 1) & (pts <= horizon)]
    if pts[-1] != horizon:
        pts = np.append(pts, horizon)
    return tuple(int(p) for p in pts)


@dataclass(frozen=True)
class Scenario:
    arms: Tuple[ArmModel, ...]
    horizon: int
    replications: int = 1
    master_seed: int = 0
    rescale_bound: float = 1.0
    checkpoints: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        if not self.arms:
            raise ValueError("scenario needs at least one arm")
        if self.horizon < len(self.arms):
            raise ValueError("horizon must allow one pull of every arm")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.master_seed < 0:
            raise ValueError("master seed must be nonnegative")
        if not self.rescale_bound > 0:
            raise ValueError("rescale_bound must be positive")
        if self.checkpoints is None:
            object.__setattr__(self, "checkpoints", default_checkpoints(self.horizon))
        else:
            ck = tuple(int(c) for c in self.checkpoints)
            if any(b <= a for a, b in zip(ck, ck[1:])) or ck[0] < 1 or ck[-1] > self.horizon:
                raise ValueError("checkpoints must be increasing rounds within [1, horizon]")
            object.__setattr__(self, "checkpoints", ck)

    @property
    def means(self) -> np.ndarray:
        return np.array([arm.true_mean() for arm in self.arms])

    @property
    def gaps(self) -> np.ndarray:
        m = self.means
        return m.max() - m


@dataclass
class RegretSummary:
    """Aggregated regret at each checkpoint plus pull counts at the horizon."""

    policy: str
    checkpoints: np.ndarray
    mean: np.ndarray
    q0005: np.ndarray
    q0995: np.ndarray
    q09995: np.ndarray
    pulls_mean: np.ndarray
    pulls_std: np.ndarray
    replications: int

    def at(self, round_: int) -> float:
        """Mean regret at a checkpoint round."""
        idx = np.flatnonzero(self.checkpoints == round_)
        if idx.size == 0:
            raise KeyError(f"{round_} is not a checkpoint")
        return float(self.mean[idx[0]])


def nearest_rank(sorted_values: np.ndarray, q: float, axis: int = 0):
    """Nearest-rank quantile of data already sorted along ``axis``."""
    n = sorted_values.shape[axis]
    k = min(max(math.ceil(q * n), 1), n) - 1
    return np.take(sorted_values, k, axis=axis)


def _policy(policy: Union[Policy, PolicySpec], scenario: Scenario) -> Policy:
    if isinstance(policy, PolicySpec):
        return policy.build(scenario.rescale_bound)
    return policy


def run_batch(policy, scenario: Scenario, replications: Sequence[int]):
    """Regret traces ``(R, checkpoints)`` and final pull counts ``(R, arms)``."""
    policy = _policy(policy, scenario)
    if policy.vectorized:
        return _run_lockstep(policy, scenario, list(replications))
    traces, pulls = zip(*(_run_one(policy, scenario, r) for r in replications))
    return np.vstack(traces), np.vstack(pulls)


def _run_lockstep(policy: Policy, scenario: Scenario, reps):
    k = len(scenario.arms)
    n = len(reps)
    bank = RewardBank(scenario.arms, scenario.master_seed, reps)
    gaps = scenario.gaps
    ck = scenario.checkpoints
    rows = np.arange(n)
    pulls = np.zeros((n, k), dtype=np.int64)
    sums = np.zeros((n, k))
    sq = np.zeros((n, k))
    regret = np.zeros(n)
    out = np.empty((n, len(ck)))
    j = 0
    for t in range(scenario.horizon):
        if t < k:
            arms = np.full(n, t)
        else:
            arms = policy.choose(pulls, sums, sq, t)
        x = bank.draw(arms)
        policy.check_reward(float(x.min()))
        policy.check_reward(float(x.max()))
        pulls[rows, arms] += 1
        sums[rows, arms] += x
        sq[rows, arms] += x * x
        regret += gaps[arms]
        if t + 1 == ck[j]:
            out[:, j] = regret
            j += 1
            if j == len(ck):
                break
    return out, pulls


def _run_one(policy: Policy, scenario: Scenario, rep: int):
    bank = RewardBank(scenario.arms, scenario.master_seed, [rep])
    state = policy.new_state(len(scenario.arms))
    gaps = scenario.gaps
    ck = scenario.checkpoints
    regret = 0.0
    out = np.empty(len(ck))
    j = 0
    arm_buf = np.zeros(1, dtype=np.int64)
    for t in range(scenario.horizon):
        arm = policy.select_arm(state)
        arm_buf[0] = arm
        policy.update(state, arm, float(bank.draw(arm_buf)[0]))
        regret += gaps[arm]
        if t + 1 == ck[j]:
            out[j] = regret
            j += 1
            if j == len(ck):
                break
    return out, state.pulls.copy()


def run_single(policy, scenario: Scenario, replication: int = 0):
    """Regret trace at the checkpoints for one replication, plus its pull counts."""
    traces, pulls = run_batch(policy, scenario, [replication])
    return traces[0], pulls[0]


def _batch_job(args):
    policy, scenario, reps = args
    return run_batch(policy, scenario, reps)


def run_monte_carlo(policy, scenario: Scenario, threads: int = 1, block: int = 1000) -> RegretSummary:
    """Run every replication of ``scenario`` and aggregate the traces."""
    policy = _policy(policy, scenario)
    reps = list(range(scenario.replications))
    if not policy.vectorized:
        block = max(1, math.ceil(len(reps) / max(threads, 1)))
    jobs = [(policy, scenario, reps[i : i + block]) for i in range(0, len(reps), block)]
    log.info("%s: %d replications in %d block(s)", policy.name, len(reps), len(jobs))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_batch_job, jobs))
    else:
        results = [_batch_job(job) for job in jobs]
    traces = np.vstack([r[0] for r in results])
    pulls = np.vstack([r[1] for r in results])
    ordered = np.sort(traces, axis=0)
    return RegretSummary(
        policy=policy.name,
        checkpoints=np.asarray(scenario.checkpoints),
        mean=traces.mean(axis=0),
        q0005=nearest_rank(ordered, QUANTILES[0]),
        q0995=nearest_rank(ordered, QUANTILES[1]),
        q09995=nearest_rank(ordered, QUANTILES[2]),
        pulls_mean=pulls.mean(axis=0),
        pulls_std=pulls.std(axis=0, ddof=1) if len(reps) > 1 else np.zeros(pulls.shape[1]),
        replications=len(reps),
    )
