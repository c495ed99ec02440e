"""Mean-parameterized Kullback-Leibler divergences of one-parameter families.

Each :class:`Divergence` is ``d(mu, mu')``: the KL divergence between the two
members of a canonical exponential family whose expectations are ``mu`` and
``mu'``.  Values live in ``[0, +inf]``; infinite values are returned where the
continuous extension to the closed expectation interval is infinite.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import rel_entr

__all__ = ["DomainError", "Family", "Divergence"]


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class Family(enum.Enum):
    BERNOULLI = "bernoulli"
    BINOMIAL = "binomial"
    POISSON = "poisson"
    NEGBIN = "negbin"
    GAUSSIAN = "gaussian"
    GAMMA = "gamma"
    QUADRATIC = "quadratic"


# families whose parameter is required, with its meaning
_PARAM_NAME = {
    Family.BINOMIAL: "n",
    Family.NEGBIN: "r",
    Family.GAUSSIAN: "sigma2",
    Family.GAMMA: "alpha",
    Family.QUADRATIC: "scale",
}


@dataclass(frozen=True)
class Divergence:
    """A divergence ``d(mu, mu')`` on the expectation interval ``[mu_lo, mu_hi]``.

    Use the constructors (:meth:`bernoulli`, :meth:`poisson`, ...) rather than
    building instances by hand.
    """

    family: Family
    param: Optional[float] = None

    def __post_init__(self):
        if self.family in _PARAM_NAME:
            if self.param is None or not (self.param > 0) or not math.isfinite(self.param):
                raise ValueError(
                    f"{self.family.value} divergence needs a positive "
                    f"{_PARAM_NAME[self.family]}, got {self.param!r}"
                )
            if self.family is Family.BINOMIAL and self.param != int(self.param):
                raise ValueError("binomial n must be an integer")
        elif self.param is not None:
            raise ValueError(f"{self.family.value} divergence takes no parameter")

    # -- constructors -------------------------------------------------------

    @classmethod
    def bernoulli(cls) -> "Divergence":
        return cls(Family.BERNOULLI)

    @classmethod
    def binomial(cls, n: int) -> "Divergence":
        return cls(Family.BINOMIAL, float(n))

    @classmethod
    def poisson(cls) -> "Divergence":
        return cls(Family.POISSON)

    @classmethod
    def negbin(cls, r: float) -> "Divergence":
        return cls(Family.NEGBIN, float(r))

    @classmethod
    def geometric(cls) -> "Divergence":
        return cls(Family.NEGBIN, 1.0)

    @classmethod
    def gaussian(cls, sigma2: float) -> "Divergence":
        return cls(Family.GAUSSIAN, float(sigma2))

    @classmethod
    def gamma(cls, alpha: float) -> "Divergence":
        return cls(Family.GAMMA, float(alpha))

    @classmethod
    def exponential(cls) -> "Divergence":
        return cls(Family.GAMMA, 1.0)

    @classmethod
    def quadratic(cls, scale: float = 2.0) -> "Divergence":
        return cls(Family.QUADRATIC, float(scale))

    # -- metadata -------------------------------------------------------------

    @property
    def mu_lo(self) -> float:
        if self.family in (Family.GAUSSIAN, Family.QUADRATIC):
            return -math.inf
        return 0.0

    @property
    def mu_hi(self) -> float:
        if self.family is Family.BERNOULLI:
            return 1.0
        if self.family is Family.BINOMIAL:
            return self.param
        return math.inf

    @property
    def name(self) -> str:
        if self.param is None:
            return self.family.value
        return f"{self.family.value}:{self.param:g}"

    def __str__(self) -> str:
        return self.name

    def _check_closed(self, *values):
        for v in values:
            v = np.asarray(v, dtype=float)
            if np.any(np.isnan(v)) or np.any(v < self.mu_lo) or np.any(v > self.mu_hi):
                raise DomainError(
                    f"argument outside [{self.mu_lo}, {self.mu_hi}] for {self.name}"
                )

    def _check_open(self, *values):
        for v in values:
            v = np.asarray(v, dtype=float)
            if (
                np.any(~np.isfinite(v))
                or np.any(v <= self.mu_lo)
                or np.any(v >= self.mu_hi)
            ):
                raise DomainError(
                    f"argument outside ({self.mu_lo}, {self.mu_hi}) for {self.name}"
                )

    # -- divergence -----------------------------------------------------------

    def eval(self, mu, mu_prime):
        """Divergence ``d(mu, mu_prime)`` with its continuous extension to the
        closed interval; ``d(x, x) = 0`` everywhere, including the endpoints."""
        self._check_closed(mu, mu_prime)
        return self._eval(mu, mu_prime)

    __call__ = eval

    def _raw(self, m, mp):
        # bare formula for mu < mu' away from infinities; the index solver's
        # inner loop calls this with floating-point warnings already silenced
        fam = self.family
        if fam is Family.BERNOULLI:
            return rel_entr(m, mp) + rel_entr(1.0 - m, 1.0 - mp)
        if fam is Family.BINOMIAL:
            n = self.param
            return rel_entr(m, mp) + rel_entr(n - m, n - mp)
        if fam is Family.POISSON:
            return rel_entr(m, mp) + (mp - m)
        if fam is Family.NEGBIN:
            r = self.param
            return rel_entr(m, mp) - rel_entr(r + m, r + mp)
        return self._eval(m, mp)

    def _eval(self, mu, mu_prime):
        # unchecked; handles the diagonal, the boundary and infinities
        m = np.asarray(mu, dtype=float)
        mp = np.asarray(mu_prime, dtype=float)
        fam = self.family
        with np.errstate(all="ignore"):
            if fam is Family.BERNOULLI:
                out = rel_entr(m, mp) + rel_entr(1.0 - m, 1.0 - mp)
            elif fam is Family.BINOMIAL:
                n = self.param
                out = rel_entr(m, mp) + rel_entr(n - m, n - mp)
            elif fam is Family.QUADRATIC:
                out = self.param * (m - mp) ** 2
            elif fam is Family.GAUSSIAN:
                out = (m - mp) ** 2 / (2.0 * self.param)
            elif fam is Family.POISSON:
                out = rel_entr(m, mp) + (mp - m)
            elif fam is Family.NEGBIN:
                r = self.param
                out = rel_entr(m, mp) - rel_entr(r + m, r + mp)
            else:
                # alpha * (x - 1 - log x) with x = mu/mu'; written as u - log1p(u)
                u = (m - mp) / mp
                out = self.param * (u - np.log1p(u))
                out = np.where(mp == 0.0, np.where(m == 0.0, 0.0, np.inf), out)
            if fam not in (Family.BERNOULLI, Family.BINOMIAL):
                inf_m = np.isinf(m)
                inf_mp = np.isinf(mp)
                if np.any(inf_m | inf_mp):
                    out = np.where(inf_m | inf_mp, np.inf, out)
                    out = np.where(inf_m & inf_mp & (m == mp), 0.0, out)
            out = np.where(m == mp, 0.0, out)
            # rounding can leave tiny negatives next to the diagonal
            out = np.maximum(out, 0.0)
        return out[()] if out.ndim == 0 else out

    def d_prime_first(self, mu, mu_star):
        """Derivative of ``d(., mu_star)`` at ``mu``; both arguments interior."""
        self._check_open(mu, mu_star)
        m = np.asarray(mu, dtype=float)
        ms = np.asarray(mu_star, dtype=float)
        fam = self.family
        if fam is Family.BERNOULLI:
            out = np.log(m / ms) - np.log((1.0 - m) / (1.0 - ms))
        elif fam is Family.BINOMIAL:
            n = self.param
            out = np.log(m / ms) - np.log((n - m) / (n - ms))
        elif fam is Family.POISSON:
            out = np.log(m / ms)
        elif fam is Family.NEGBIN:
            r = self.param
            out = np.log(m / ms) + np.log((r + ms) / (r + m))
        elif fam is Family.GAUSSIAN:
            out = (m - ms) / self.param
        elif fam is Family.GAMMA:
            out = self.param * (1.0 / ms - 1.0 / m)
        else:
            out = 2.0 * self.param * (m - ms)
        return out[()] if out.ndim == 0 else out

    # -- variance -------------------------------------------------------------

    def variance(self, mu):
        """Variance of the family member with expectation ``mu``."""
        m = np.asarray(mu, dtype=float)
        fam = self.family
        if fam is Family.BERNOULLI:
            out = m * (1.0 - m)
        elif fam is Family.BINOMIAL:
            out = m * (1.0 - m / self.param)
        elif fam is Family.POISSON:
            out = m.copy()
        elif fam is Family.NEGBIN:
            out = m * (1.0 + m / self.param)
        elif fam is Family.GAMMA:
            out = m**2 / self.param
        elif fam is Family.GAUSSIAN:
            out = np.full_like(m, self.param)
        else:
            # variance whose moment generating function the quadratic dominates
            out = np.full_like(m, 1.0 / (2.0 * self.param))
        return out[()] if out.ndim == 0 else out

    def variance_envelope(self, mu_a: float, mu_star: float) -> float:
        """Largest family variance over expectations in ``[mu_a, mu_star]``."""
        self._check_open(mu_a, mu_star)
        if mu_a > mu_star:
            raise DomainError("variance envelope needs mu_a <= mu_star")
        if self.family in (Family.BERNOULLI, Family.BINOMIAL):
            # concave variance function, peak at the middle of the interval
            peak = self.mu_hi / 2.0
            return float(self.variance(min(max(peak, mu_a), mu_star)))
        # remaining families have nondecreasing variance on (0, inf)
        return float(self.variance(mu_star))
