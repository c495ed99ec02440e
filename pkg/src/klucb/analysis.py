"""Theoretical quantities: lower-bound line, finite-time pull bounds and
Monte-Carlo verifiers for the deviation and coverage inequalities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from .divergence import Divergence, DomainError, Family
from .empirical import el_upper_bound_rows, kinf_rows
from .environments import (
    ArmModel,
    Bernoulli,
    FiniteSupport,
    Gaussian,
    TruncatedExponential,
)

__all__ = [
    "BoundReport",
    "CheckResult",
    "thm1_bound",
    "corollary1_bound",
    "corollary2_bound",
    "kinf_leading_term",
    "arm_kinf",
    "scenario_kinf",
    "lower_bound_constant",
    "lower_bound_line",
    "deviation_check",
    "coverage_check",
]


@dataclass
class BoundReport:
    """Bound on the expected number of pulls of one suboptimal arm."""

    mu_a: float
    mu_star: float
    leading_term: float
    remainder_terms: List[Tuple[str, float]] = field(default_factory=list)
    label: str = ""

    @property
    def gap(self) -> float:
        return self.mu_star - self.mu_a

    @property
    def total_bound(self) -> float:
        return self.leading_term + sum(v for _, v in self.remainder_terms)

    @property
    def regret_contribution(self) -> float:
        return self.gap * self.total_bound

    def terms(self) -> List[Tuple[str, float]]:
        """All labeled terms followed by the total."""
        return [("leading", self.leading_term), *self.remainder_terms, ("total", self.total_bound)]


def _log_horizon(T, log_T):
    if log_T is None:
        if T < 3:
            raise DomainError("the bound needs T >= 3")
        return math.log(T)
    if log_T < math.log(3.0):
        raise DomainError("the bound needs T >= 3")
    return float(log_T)


def _pull_bound(log_t, mu_a, mu_star, d_val, d_prime, sigma2, label):
    loglog = math.log(log_t)
    f_t = log_t + 3.0 * loglog
    return BoundReport(
        mu_a=mu_a,
        mu_star=mu_star,
        leading_term=log_t / d_val,
        remainder_terms=[
            ("sqrt_log", 2.0 * math.sqrt(2.0 * math.pi * sigma2 * d_prime**2 / d_val**3) * math.sqrt(f_t)),
            ("loglog", (4.0 * math.e + 3.0 / d_val) * loglog),
            ("variance_ratio", 8.0 * sigma2 * (d_prime / d_val) ** 2),
            ("constant", 6.0),
        ],
        label=label,
    )


def _check_pair(d: Divergence, mu_a, mu_star):
    if not mu_a < mu_star:
        raise DomainError("the bound is for a suboptimal arm: mu_a < mu_star")
    d._check_open(mu_a, mu_star)


def thm1_bound(T, mu_a: float, mu_star: float, d: Divergence, log_T: Optional[float] = None) -> BoundReport:
    """Finite-time bound on ``E[N_a(T)]`` for kl-UCB with ``f = log t + 3 log log t``.

    ``log_T`` may replace ``T`` for horizons too large for a float.
    """
    log_t = _log_horizon(T, log_T)
    _check_pair(d, mu_a, mu_star)
    return _pull_bound(
        log_t,
        mu_a,
        mu_star,
        float(d(mu_a, mu_star)),
        float(d.d_prime_first(mu_a, mu_star)),
        d.variance_envelope(mu_a, mu_star),
        d.name,
    )


def corollary1_bound(T, mu_a: float, mu_star: float, log_T: Optional[float] = None) -> BoundReport:
    """Bound for kl-UCB with the Bernoulli divergence on any rewards in [0, 1]."""
    log_t = _log_horizon(T, log_T)
    d = Divergence.bernoulli()
    _check_pair(d, mu_a, mu_star)
    # the variance envelope is replaced by the [0, 1] worst case 1/4
    return _pull_bound(
        log_t,
        mu_a,
        mu_star,
        float(d(mu_a, mu_star)),
        float(d.d_prime_first(mu_a, mu_star)),
        0.25,
        "corollary-bernoulli",
    )


def corollary2_bound(T, mu_a: float, mu_star: float, log_T: Optional[float] = None) -> BoundReport:
    """Bound for UCB, i.e. kl-UCB with ``d = 2 (mu - mu')^2``, on [0, 1] rewards."""
    log_t = _log_horizon(T, log_T)
    d = Divergence.quadratic(2.0)
    _check_pair(d, mu_a, mu_star)
    rep = thm1_bound(None, mu_a, mu_star, d, log_T=log_t)
    rep.label = "corollary-quadratic"
    return rep


def kinf_leading_term(T, kinf_value: float) -> float:
    """Leading term ``log T / K_inf`` of the empirical KL-UCB pull bound."""
    if not kinf_value > 0:
        raise DomainError("K_inf must be positive")
    return math.log(T) / kinf_value


# -- lower bound --------------------------------------------------------------


def _truncated_exponential_kinf(arm: TruncatedExponential, mu: float, scale: float) -> float:
    # K_inf on [0, 1] after dividing rewards by ``scale``; dual over lambda
    cap = arm.cap / scale
    rate = arm.rate * scale
    tail = math.exp(-rate * cap)

    def objective(lam):
        body, _ = integrate.quad(
            lambda x: math.log1p(-lam * (x - mu)) * rate * math.exp(-rate * x), 0.0, cap, limit=200
        )
        return -(body + tail * math.log1p(-lam * (cap - mu)))

    hi = 1.0 / (1.0 - mu)
    if cap >= 1.0:
        # an atom at 1 keeps the optimum strictly inside
        hi = hi * (1.0 - 1e-12)
    res = optimize.minimize_scalar(objective, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12})
    return max(0.0, -float(res.fun))


def arm_kinf(arm: ArmModel, mu: float, scale: float = 1.0) -> float:
    """K_inf of one arm at level ``mu`` (raw scale).

    Bounded arms use the nonparametric model of laws on ``[0, scale]``;
    Gaussian arms use the Gaussian family with the arm's variance.
    """
    if arm.true_mean() >= mu:
        return 0.0
    if isinstance(arm, Gaussian):
        return (mu - arm.mu) ** 2 / (2.0 * arm.sigma2)
    if arm.upper > scale:
        raise DomainError(f"arm {arm.spec()} exceeds the bound {scale:g}")
    level = mu / scale
    if not 0.0 < level < 1.0:
        raise DomainError("K_inf level must be interior to the reward range")
    if isinstance(arm, TruncatedExponential):
        return _truncated_exponential_kinf(arm, level, scale)
    atoms = arm.atoms()
    if atoms is None:
        raise DomainError(f"no K_inf evaluator for {type(arm).__name__}")
    values, probs = atoms
    return float(kinf_rows(values / scale, probs, level)[0])


def scenario_kinf(arms: Sequence[ArmModel], scale: float = 1.0) -> np.ndarray:
    """K_inf of every arm at the best mean; zero for optimal arms."""
    means = np.array([a.true_mean() for a in arms])
    mu_star = means.max()
    return np.array([arm_kinf(a, mu_star, scale) if m < mu_star else 0.0 for a, m in zip(arms, means)])


def lower_bound_constant(means, kinf) -> float:
    """``sum_a (mu_star - mu_a) / K_inf_a`` over suboptimal arms.

    ``kinf`` is either a sequence of per-arm values or a :class:`Divergence`,
    in which case ``K_inf_a = d(mu_a, mu_star)``.
    """
    means = np.asarray(means, dtype=float)
    mu_star = means.max()
    sub = means < mu_star
    if not sub.any():
        return 0.0
    if isinstance(kinf, Divergence):
        k = np.asarray(kinf(means[sub], np.full(sub.sum(), mu_star)), dtype=float)
    else:
        k = np.asarray(kinf, dtype=float)[sub]
    if np.any(k <= 0):
        raise DomainError("K_inf must be positive for every suboptimal arm")
    return float(np.sum((mu_star - means[sub]) / k))


def lower_bound_line(means, kinf) -> Callable:
    """The asymptotic lower bound ``t -> log(t) * sum_a gap_a / K_inf_a``.

    Returns the zero function (with a warning) when every arm is optimal.
    """
    const = lower_bound_constant(means, kinf)
    if const == 0.0:
        warnings.warn("all arms are optimal; the lower bound is identically zero", stacklevel=2)

    def line(t):
        return const * np.log(t)

    line.constant = const
    return line


# -- Monte-Carlo verifiers ----------------------------------------------------


@dataclass
class CheckResult:
    empirical: float
    bound: float
    samples: int

    @property
    def vacuous(self) -> bool:
        return self.bound >= 1.0

    @property
    def stderr(self) -> float:
        """Binomial standard error at the bound."""
        b = min(max(self.bound, 0.0), 1.0)
        return math.sqrt(b * (1.0 - b) / self.samples)

    def holds(self, n_se: float = 3.0) -> bool:
        return self.vacuous or self.empirical <= self.bound + n_se * self.stderr


def _family_sampler(d: Divergence, mu: float):
    fam = d.family
    if fam is Family.BERNOULLI:
        return lambda rng, shape: (rng.random(shape) < mu).astype(float)
    if fam is Family.BINOMIAL:
        return lambda rng, shape: rng.binomial(int(d.param), mu / d.param, shape).astype(float)
    if fam is Family.POISSON:
        return lambda rng, shape: rng.poisson(mu, shape).astype(float)
    if fam is Family.NEGBIN:
        r = d.param
        return lambda rng, shape: rng.negative_binomial(r, r / (r + mu), shape).astype(float)
    if fam is Family.GAMMA:
        return lambda rng, shape: rng.gamma(d.param, mu / d.param, shape)
    sigma = math.sqrt(d.param if fam is Family.GAUSSIAN else 1.0 / (2.0 * d.param))
    return lambda rng, shape: rng.normal(mu, sigma, shape)


def deviation_check(
    d: Divergence, mu_star: float, t: int, epsilon: float, samples: int, rng, chunk: int = 2000
) -> CheckResult:
    """Frequency of ``{exists n <= t: mu_hat_n < mu_star, n d(mu_hat_n, mu_star) >= eps}``
    against ``e ceil(eps log t) exp(-eps)``."""
    if not epsilon > 1:
        raise ValueError("deviation check needs epsilon > 1")
    if t < 2:
        raise ValueError("deviation check needs t >= 2")
    if samples < 1:
        raise ValueError("need at least one sample")
    d._check_open(mu_star)
    draw = _family_sampler(d, mu_star)
    n = np.arange(1, t + 1, dtype=float)
    hits = 0
    for start in range(0, samples, chunk):
        rows = min(chunk, samples - start)
        means = np.cumsum(draw(rng, (rows, t)), axis=1) / n
        mu_hat = np.clip(means, d.mu_lo, d.mu_hi)
        dev = n * d._eval(mu_hat, np.full_like(mu_hat, mu_star))
        hits += int(np.count_nonzero(((means < mu_star) & (dev >= epsilon)).any(axis=1)))
    bound = math.e * math.ceil(epsilon * math.log(t)) * math.exp(-epsilon)
    return CheckResult(hits / samples, bound, samples)


def coverage_check(nu0: ArmModel, n: int, epsilon: float, samples: int, rng, chunk: int = 5000) -> CheckResult:
    """Frequency of ``U(nu_hat_n, eps) <= E(nu0)`` against ``e (n + 2) exp(-n eps)``."""
    if n < 1 or samples < 1:
        raise ValueError("need n >= 1 and samples >= 1")
    if not epsilon >= 0:
        raise ValueError("epsilon must be nonnegative")
    if nu0.upper > 1.0:
        raise DomainError("coverage check needs a law on [0, 1]")
    mean = nu0.true_mean()
    if not 0.0 < mean < 1.0:
        raise DomainError("coverage check needs a mean in (0, 1)")
    bound = math.e * (n + 2) * math.exp(-n * epsilon)
    if bound >= 1.0:
        warnings.warn(f"coverage bound {bound:.3g} >= 1 is vacuous", stacklevel=2)
    weights = np.full(n, 1.0 / n)
    hits = 0
    for start in range(0, samples, chunk):
        rows = min(chunk, samples - start)
        x = nu0.sample(rng, (rows, n))
        upper = el_upper_bound_rows(x, np.broadcast_to(weights, x.shape), epsilon)
        hits += int(np.count_nonzero(upper <= mean))
    return CheckResult(hits / samples, bound, samples)
