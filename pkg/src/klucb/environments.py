"""Arm reward models and reproducible reward streams.

Every arm model can draw samples, report its exact mean and, when its law is
discrete, list its atoms.  Truncated kinds censor: a raw draw ``X`` becomes
``min(X, cap)``.

Randomness: the ``n``-th reward of arm ``a`` in replication ``r`` is the
``n``-th draw of a PCG64 generator seeded with
``SeedSequence(master_seed, spawn_key=(r, a))``.  Rewards therefore depend
only on ``(master_seed, r, a, n)``, never on the policy or on how
replications are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

__all__ = [
    "ArmModel",
    "Bernoulli",
    "TruncatedPoisson",
    "TruncatedExponential",
    "Gaussian",
    "FiniteSupport",
    "parse_arm",
    "replication_rng",
    "RewardBank",
]


class ArmModel:
    """Base class; subclasses are frozen dataclasses."""

    #: largest possible reward, ``inf`` when unbounded
    upper: float = math.inf

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def true_mean(self) -> float:
        raise NotImplementedError

    def atoms(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """``(values, probabilities)`` for discrete laws, else ``None``."""
        return None

    def spec(self) -> str:
        """Config-file representation, e.g. ``bernoulli 0.1``."""
        raise NotImplementedError


@dataclass(frozen=True)
class Bernoulli(ArmModel):
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Bernoulli parameter {self.p} outside [0, 1]")

    upper = 1.0

    def sample(self, rng, size=None):
        return (rng.random(size) < self.p).astype(float)

    def true_mean(self):
        return float(self.p)

    def atoms(self):
        return np.array([0.0, 1.0]), np.array([1.0 - self.p, self.p])

    def spec(self):
        return f"bernoulli {self.p!r}"


@dataclass(frozen=True)
class TruncatedPoisson(ArmModel):
    lam: float
    cap: float

    def __post_init__(self):
        if not (self.lam > 0 and self.cap > 0):
            raise ValueError("truncated Poisson needs lambda > 0 and cap > 0")

    @property
    def upper(self):
        return float(self.cap)

    def sample(self, rng, size=None):
        return np.minimum(rng.poisson(self.lam, size), self.cap).astype(float)

    def atoms(self):
        top = math.ceil(self.cap)
        ks = np.arange(top, dtype=float)
        probs = stats.poisson.pmf(ks, self.lam)
        tail = stats.poisson.sf(top - 1, self.lam)
        return np.append(ks, float(self.cap)), np.append(probs, tail)

    def true_mean(self):
        values, probs = self.atoms()
        return float(np.dot(values, probs))

    def spec(self):
        return f"tpoisson {self.lam!r} {self.cap!r}"


@dataclass(frozen=True)
class TruncatedExponential(ArmModel):
    rate: float
    cap: float

    def __post_init__(self):
        if not (self.rate > 0 and self.cap > 0):
            raise ValueError("truncated exponential needs rate > 0 and cap > 0")

    @property
    def upper(self):
        return float(self.cap)

    def sample(self, rng, size=None):
        return np.minimum(rng.exponential(1.0 / self.rate, size), self.cap)

    def true_mean(self):
        # E min(X, c) = int_0^c P(X > x) dx
        return -math.expm1(-self.rate * self.cap) / self.rate

    def spec(self):
        return f"texponential {self.rate!r} {self.cap!r}"


@dataclass(frozen=True)
class Gaussian(ArmModel):
    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("Gaussian variance must be positive")

    def sample(self, rng, size=None):
        return rng.normal(self.mu, math.sqrt(self.sigma2), size)

    def true_mean(self):
        return float(self.mu)

    def spec(self):
        return f"gaussian {self.mu!r} {self.sigma2!r}"


@dataclass(frozen=True)
class FiniteSupport(ArmModel):
    values: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("finite support needs matching, nonempty values and probs")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("finite support probabilities must be a probability vector")

    @property
    def upper(self):
        return float(max(self.values))

    def sample(self, rng, size=None):
        p = np.asarray(self.probs, dtype=float)
        idx = rng.choice(len(self.values), size=size, p=p / p.sum())
        return np.asarray(self.values, dtype=float)[idx]

    def true_mean(self):
        return float(np.dot(self.values, self.probs))

    def atoms(self):
        return np.asarray(self.values, dtype=float), np.asarray(self.probs, dtype=float)

    def spec(self):
        return "finite " + ",".join(f"{v!r}:{p!r}" for v, p in zip(self.values, self.probs))


def parse_arm(text: str) -> ArmModel:
    """Parse ``<kind> <params...>`` as written in scenario files."""
    parts = text.split()
    if not parts:
        raise ValueError("empty arm specification")
    kind, args = parts[0].lower(), parts[1:]

    def nums(count):
        if len(args) != count:
            raise ValueError(f"arm kind {kind!r} takes {count} parameter(s), got {len(args)}")
        return [float(a) for a in args]

    if kind == "bernoulli":
        return Bernoulli(*nums(1))
    if kind == "tpoisson":
        return TruncatedPoisson(*nums(2))
    if kind == "texponential":
        return TruncatedExponential(*nums(2))
    if kind == "gaussian":
        return Gaussian(*nums(2))
    if kind == "finite":
        if len(args) != 1:
            raise ValueError("finite arm takes one comma-separated list v1:p1,v2:p2,...")
        values, probs = [], []
        for item in args[0].split(","):
            v, _, p = item.partition(":")
            if not p:
                raise ValueError(f"finite atom {item!r} is not value:probability")
            values.append(float(v))
            probs.append(float(p))
        return FiniteSupport(tuple(values), tuple(probs))
    raise ValueError(f"unknown arm kind {kind!r}")


def replication_rng(master_seed: int, replication: int, arm: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(replication, arm)))
    )


class RewardBank:
    """Buffered reward streams for a block of replications.

    ``draw(arms)`` returns, for each replication in the block, the next reward
    of the requested arm.
    """

    block = 256

    def __init__(self, arms: Sequence[ArmModel], master_seed: int, replications: Sequence[int]):
        self.arms = list(arms)
        self.replications = list(replications)
        k = len(self.arms)
        self._rngs = [
            [replication_rng(master_seed, r, a) for a in range(k)] for r in self.replications
        ]
        self._buf = np.empty((len(self.replications), k, self.block))
        self._pos = np.full((len(self.replications), k), self.block, dtype=np.int64)

    def _refill(self, rows, arms):
        for r, a in zip(rows.tolist(), arms.tolist()):
            self._buf[r, a] = self.arms[a].sample(self._rngs[r][a], self.block)
            self._pos[r, a] = 0

    def draw(self, arms) -> np.ndarray:
        arms = np.asarray(arms, dtype=np.int64)
        rows = np.arange(len(self.replications))
        pos = self._pos[rows, arms]
        empty = pos >= self.block
        if np.any(empty):
            self._refill(rows[empty], arms[empty])
            pos = self._pos[rows, arms]
        out = self._buf[rows, arms, pos]
        self._pos[rows, arms] = pos + 1
        return out
