"""Exploration schedules and the kl-UCB upper confidence index.

The index of an arm with empirical mean ``mu_hat`` and confidence budget
``epsilon = f(t) / N`` is::

    U = sup { mu in [mu_lo, mu_hi] : d(mu_hat, mu) <= epsilon }

``d(mu_hat, .)`` is nondecreasing to the right of ``mu_hat``, so the supremum
is found by bisection on a bracket ``[mu_hat, hi]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .divergence import Divergence, DomainError, Family

__all__ = ["ScheduleKind", "ExplorationSchedule", "exploration", "kl_index"]

INDEX_TOL = 1e-10
MAX_BISECTIONS = 200
TINY_EPS = 1e-14
_MAX_DOUBLINGS = 1100


class ScheduleKind(enum.Enum):
    LOG_T = "logt"
    LOG_PLUS_3LOGLOG = "log3loglog"
    LOG_PLUS_LOGLOG = "logloglog"
    CONSTANT = "const"


@dataclass(frozen=True)
class ExplorationSchedule:
    """The exploration function ``f(t)`` setting the confidence level."""

    kind: ScheduleKind = ScheduleKind.LOG_T
    value: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "ExplorationSchedule":
        """Parse ``logt``, ``log3loglog``, ``logloglog`` or ``const:<value>``."""
        text = text.strip().lower()
        if text.startswith("const:"):
            value = float(text.split(":", 1)[1])
            if not value >= 0:
                raise ValueError(f"constant exploration level must be >= 0: {text}")
            return cls(ScheduleKind.CONSTANT, value)
        try:
            return cls(ScheduleKind(text))
        except ValueError:
            raise ValueError(f"unknown exploration schedule {text!r}") from None

    @property
    def name(self) -> str:
        if self.kind is ScheduleKind.CONSTANT:
            return f"const:{self.value:g}"
        return self.kind.value

    def __call__(self, t) -> float:
        return exploration(self, t)


def exploration(f: ExplorationSchedule, t) -> float:
    """Evaluate ``f(t)`` for ``t >= 1``.

    ``log3loglog`` is ``log t + 3 log log t``, frozen at its ``t = 3`` value for
    ``t < 3``; ``logloglog`` is ``log t + log log t`` frozen at ``t = 2`` below 2.
    """
    if t < 1:
        raise ValueError(f"exploration needs t >= 1, got {t}")
    kind = f.kind
    if kind is ScheduleKind.LOG_T:
        return max(0.0, math.log(t))
    if kind is ScheduleKind.LOG_PLUS_3LOGLOG:
        t = max(t, 3)
        return math.log(t) + 3.0 * math.log(math.log(t))
    if kind is ScheduleKind.LOG_PLUS_LOGLOG:
        t = max(t, 2)
        return math.log(t) + math.log(math.log(t))
    return f.value


def _initial_bracket(d: Divergence, mu_hat, eps):
    """Right end of a bracket known to contain the supremum."""
    fam = d.family
    if fam is Family.BERNOULLI:
        # Pinsker: d >= 2 (mu - mu')^2
        return np.minimum(1.0, mu_hat + np.sqrt(eps / 2.0))
    if fam is Family.BINOMIAL:
        n = d.param
        return np.minimum(n, mu_hat + np.sqrt(n * eps / 2.0))
    if fam is Family.POISSON:
        # d(mu, mu') >= (mu' - mu)^2 / (2 mu') for mu' >= mu
        return mu_hat + eps + np.sqrt(eps * eps + 2.0 * eps * mu_hat)
    # negative binomial and gamma: grow the bracket until the constraint fails
    width = np.ones_like(mu_hat)
    hi = mu_hat + width
    for _ in range(_MAX_DOUBLINGS):
        grow = d._eval(mu_hat, hi) <= eps
        if not np.any(grow):
            break
        width = np.where(grow, 2.0 * width, width)
        hi = mu_hat + width
    return hi


def kl_index(d: Divergence, mu_hat, epsilon, tol: float = INDEX_TOL, closed_form: bool = True):
    """Upper confidence index ``sup{mu : d(mu_hat, mu) <= epsilon}``.

    Vectorized over ``mu_hat`` and ``epsilon``.  The returned value always
    satisfies ``d(mu_hat, U) <= epsilon`` (up to rounding for the Gaussian and
    quadratic closed forms) and lies within ``tol`` of the exact supremum.  With ``closed_form=False`` the Gaussian and quadratic cases go
    through the numerical solver too.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    eps = np.asarray(epsilon, dtype=float)
    d._check_closed(mu_hat)
    if np.any(np.isnan(eps)) or np.any(eps < 0):
        raise DomainError("epsilon must be nonnegative")
    mu_hat, eps = np.broadcast_arrays(mu_hat, eps)
    scalar = mu_hat.ndim == 0

    if closed_form and d.family is Family.GAUSSIAN:
        out = mu_hat + np.sqrt(2.0 * d.param * eps)
    elif closed_form and d.family is Family.QUADRATIC:
        out = mu_hat + np.sqrt(eps / d.param)
    else:
        out = _bisect_index(d, mu_hat.ravel(), eps.ravel(), tol).reshape(mu_hat.shape)
        # below ~1e-14 the divergence is lost to cancellation; use the local quadratic
        with np.errstate(all="ignore"):
            var = d.variance(mu_hat)
        tiny = (eps > 0.0) & (eps < TINY_EPS) & (var > 1e-6)
        if np.any(tiny):
            out = np.where(tiny, np.minimum(mu_hat + np.sqrt(2.0 * eps * var), d.mu_hi), out)
    out = np.where(eps == 0.0, mu_hat, out)
    out = np.where(np.isinf(eps), d.mu_hi, out)
    return float(out.reshape(())) if scalar else out


def _bisect_index(d, mu_hat, eps, tol):
    """Safeguarded Newton on ``g(x) = d(mu_hat, x) - eps`` over ``[lo, hi]``.

    ``lo`` is always feasible and ``hi`` infeasible (or the range end).  A
    Newton step from an infeasible point that moves less than ``tol / 2`` is
    replaced by a probe at ``hi - tol / 2``; steps leaving the bracket are
    replaced by bisection.  Converged entries are frozen, so every result is
    independent of the batch it was solved in.
    """
    eps = np.where(np.isfinite(eps), eps, 0.0)
    lo = mu_hat.astype(float, copy=True)
    hi = np.array(_initial_bracket(d, mu_hat, eps), dtype=float)
    # the bracket end itself may be feasible (e.g. mu_hat at the top of the range)
    lo = np.where(d._eval(mu_hat, hi) <= eps, hi, lo)
    active = np.flatnonzero(hi - lo >= tol)
    m, e = mu_hat[active], eps[active]
    a_lo, a_hi = lo[active], hi[active]
    x = a_hi.copy()
    with np.errstate(all="ignore"):
        for _ in range(MAX_BISECTIONS):
            if active.size == 0:
                break
            g = d._raw(m, x) - e
            ok = g <= 0
            a_lo = np.where(ok, x, a_lo)
            a_hi = np.where(ok, a_hi, x)
            keep = a_hi - a_lo >= tol
            if not keep.all():
                lo[active] = a_lo
                active, m, e, a_lo, a_hi, x, g, ok = (
                    v[keep] for v in (active, m, e, a_lo, a_hi, x, g, ok)
                )
                if active.size == 0:
                    break
            step = g * d.variance(x) / (x - m)
            nx = x - step
            nx = np.where(~ok & (step < 0.5 * tol), a_hi - 0.5 * tol, nx)
            inside = (nx > a_lo) & (nx < a_hi)
            x = np.where(inside, nx, 0.5 * (a_lo + a_hi))
    lo[active] = a_lo
    return lo
